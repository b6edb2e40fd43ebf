#pragma once

#include <map>
#include <string>
#include <vector>

#include "gapaudit/matrix.hpp"

namespace gapaudit::integrity {

struct KsResult {
    double d_statistic = 0.0;
    double p_value = 1.0;
    std::size_t n1 = 0;
    std::size_t n2 = 0;
};

struct PcaResult {
    std::vector<double> explained_variance_ratios;        // descending
    std::map<double, std::size_t> components_for_thresholds;
};

struct RangeEntry {
    std::string name;
    double raw_min = 0.0, raw_max = 0.0;
    double curated_min = 0.0, curated_max = 0.0;
    double preserved_fraction = 0.0;
};

struct RangeReport {
    std::vector<RangeEntry> entries;
};

// Two-sample Kolmogorov-Smirnov. D is the sup over pooled values of the
// ECDF difference; the p-value uses the asymptotic Kolmogorov series with
// the Stephens small-sample correction on the effective sample size.
KsResult ks_two_sample(const std::vector<double>& x, const std::vector<double>& y);

// Explained-variance ratios of the (optionally z-scored) column covariance,
// eigen-decomposed with a cyclic Jacobi solver. Thresholds map to the
// minimal component count whose cumulative ratio reaches them.
PcaResult pca_explained_variance(const FeatureMatrix& matrix, bool standardize = true,
                                 const std::vector<double>& thresholds = {0.774, 0.95});

// preserved_fraction = (curated_max - curated_min) / (raw_max - raw_min).
RangeEntry range_preservation(const std::string& name, const std::vector<double>& raw_col,
                              const std::vector<double>& curated_col);

namespace detail {
// Eigenvalues of a symmetric matrix (row-major p x p), descending.
// Cyclic Jacobi; stops when the off-diagonal norm falls below 1e-12 * trace.
std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t p);
}  // namespace detail

}  // namespace gapaudit::integrity
