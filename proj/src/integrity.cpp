#include "gapaudit/integrity.hpp"

#include <algorithm>
#include <cmath>

#include "gapaudit/errors.hpp"

namespace gapaudit::integrity {

namespace {

void require_finite_nonempty(const std::vector<double>& v, const char* which) {
    if (v.empty()) throw DataError(std::string(which) + " sample is empty");
    for (double x : v)
        if (!std::isfinite(x))
            throw DataError(std::string(which) + " sample has non-finite values");
}

// Kolmogorov asymptotic survival series, 2 * sum (-1)^{k-1} exp(-2 k^2 l^2),
// truncated when a term drops below 1e-12. Below l = 1e-4 the sum is 1 to
// far beyond double precision, so it is returned directly.
double kolmogorov_p(double lambda) {
    if (lambda < 1e-4) return 1.0;
    double sum = 0;
    double sign = 1;
    for (int k = 1;; ++k) {
        double term = 2.0 * std::exp(-2.0 * lambda * lambda * k * k);
        if (term < 1e-12) break;
        sum += sign * term;
        sign = -sign;
    }
    return std::clamp(sum, 0.0, 1.0);
}

}  // namespace

KsResult ks_two_sample(const std::vector<double>& x, const std::vector<double>& y) {
    require_finite_nonempty(x, "first");
    require_finite_nonempty(y, "second");
    std::vector<double> a = x, b = y;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double n1 = static_cast<double>(a.size());
    const double n2 = static_cast<double>(b.size());
    double d = 0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == v) ++i;
        while (j < b.size() && b[j] == v) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / n1 -
                                  static_cast<double>(j) / n2));
    }

    KsResult result;
    result.d_statistic = d;
    result.n1 = a.size();
    result.n2 = b.size();
    if (d == 0) {
        result.p_value = 1.0;
        return result;
    }
    double ne = n1 * n2 / (n1 + n2);
    double sqrt_ne = std::sqrt(ne);
    double lambda = (sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d;
    result.p_value = kolmogorov_p(lambda);
    return result;
}

namespace detail {

std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t p) {
    if (a.size() != p * p) throw DataError("jacobi: matrix size mismatch");
    auto at = [&](std::size_t r, std::size_t c) -> double& { return a[r * p + c]; };

    double trace = 0;
    for (std::size_t i = 0; i < p; ++i) trace += at(i, i);
    double stop = 1e-12 * std::max(trace, 1e-300);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0;
        for (std::size_t r = 0; r < p; ++r)
            for (std::size_t c = r + 1; c < p; ++c) off += 2 * at(r, c) * at(r, c);
        if (std::sqrt(off) < stop) break;
        for (std::size_t q = 0; q < p; ++q) {
            for (std::size_t r = q + 1; r < p; ++r) {
                double apq = at(q, r);
                if (apq == 0) continue;
                double theta = (at(r, r) - at(q, q)) / (2 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::fabs(theta) + std::sqrt(theta * theta + 1));
                double c = 1 / std::sqrt(t * t + 1);
                double s = t * c;
                for (std::size_t k = 0; k < p; ++k) {
                    double akq = at(k, q), akr = at(k, r);
                    at(k, q) = c * akq - s * akr;
                    at(k, r) = s * akq + c * akr;
                }
                for (std::size_t k = 0; k < p; ++k) {
                    double aqk = at(q, k), ark = at(r, k);
                    at(q, k) = c * aqk - s * ark;
                    at(r, k) = s * aqk + c * ark;
                }
            }
        }
    }
    std::vector<double> eig(p);
    for (std::size_t i = 0; i < p; ++i) eig[i] = at(i, i);
    std::sort(eig.begin(), eig.end(), std::greater<double>());
    return eig;
}

}  // namespace detail

PcaResult pca_explained_variance(const FeatureMatrix& matrix, bool standardize,
                                 const std::vector<double>& thresholds) {
    const std::size_t n = matrix.rows();
    const std::size_t p = matrix.cols();
    if (n < 2) throw DataError("pca needs at least 2 rows");
    if (p < 1) throw DataError("pca needs at least 1 column");

    // Column-major working copy, z-scored when requested (sample std).
    std::vector<std::vector<double>> cols(p);
    for (std::size_t c = 0; c < p; ++c) {
        cols[c] = matrix.column(c);
        double mean = 0;
        for (double v : cols[c]) mean += v;
        mean /= static_cast<double>(n);
        for (double& v : cols[c]) v -= mean;
        if (standardize) {
            double ss = 0;
            for (double v : cols[c]) ss += v * v;
            double sd = std::sqrt(ss / static_cast<double>(n - 1));
            if (sd > 0)
                for (double& v : cols[c]) v /= sd;
            // Constant columns stay centered at zero and contribute nothing.
        }
    }

    std::vector<double> cov(p * p, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = i; j < p; ++j) {
            double s = 0;
            for (std::size_t r = 0; r < n; ++r) s += cols[i][r] * cols[j][r];
            s /= static_cast<double>(n - 1);
            cov[i * p + j] = s;
            cov[j * p + i] = s;
        }
    }
    double total = 0;
    for (std::size_t i = 0; i < p; ++i) total += cov[i * p + i];
    if (total <= 0) throw DataError("degenerate matrix: zero total variance");

    std::vector<double> eig = detail::jacobi_eigenvalues(std::move(cov), p);
    double sum = 0;
    for (double& v : eig) {
        if (v < 0) v = 0;  // round tiny negative eigenvalues of the PSD matrix
        sum += v;
    }

    PcaResult result;
    result.explained_variance_ratios.reserve(p);
    for (double v : eig) result.explained_variance_ratios.push_back(v / sum);
    for (double t : thresholds) {
        double cum = 0;
        std::size_t k = p;
        for (std::size_t i = 0; i < p; ++i) {
            cum += result.explained_variance_ratios[i];
            if (cum >= t - 1e-12) {
                k = i + 1;
                break;
            }
        }
        result.components_for_thresholds[t] = k;
    }
    return result;
}

RangeEntry range_preservation(const std::string& name, const std::vector<double>& raw_col,
                              const std::vector<double>& curated_col) {
    require_finite_nonempty(raw_col, "raw");
    require_finite_nonempty(curated_col, "curated");
    RangeEntry e;
    e.name = name;
    auto [rmin, rmax] = std::minmax_element(raw_col.begin(), raw_col.end());
    auto [cmin, cmax] = std::minmax_element(curated_col.begin(), curated_col.end());
    e.raw_min = *rmin;
    e.raw_max = *rmax;
    e.curated_min = *cmin;
    e.curated_max = *cmax;
    if (e.raw_max == e.raw_min) throw DataError("zero raw range for " + name);
    e.preserved_fraction = (e.curated_max - e.curated_min) / (e.raw_max - e.raw_min);
    return e;
}

}  // namespace gapaudit::integrity
