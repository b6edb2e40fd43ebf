#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gapaudit/learn.hpp"
#include "gapaudit/matrix.hpp"

namespace gapaudit::explain {

struct Attribution {
    double base_value = 0.0;         // expectation over the tree ensemble
    std::vector<double> phi;         // one value per feature
    double prediction = 0.0;
    // base_value + sum(phi) must equal prediction to within tolerance.
    double additivity_gap() const;
};

// Exact path-dependent SHAP values for a single tree: recursive subset-path
// weight propagation (EXTEND/UNWIND) over the tree structure, using recorded
// node covers as the background distribution.
Attribution tree_shap(const learn::RegressionTree& tree, const double* x, std::size_t p);

// Ensemble attributions: sum of per-tree attributions, scaled by 1/n_trees
// for forests and by the learning rate (plus the constant base) for boosted
// models, matching each ensemble's prediction rule.
Attribution ensemble_shap(const learn::Ensemble& model, const double* x, std::size_t p);

// Brute-force Shapley values by enumerating all 2^p feature subsets with the
// cover-weighted conditional expectation as the value function. Exponential;
// guarded to p <= 20. The reference oracle tree_shap must agree with.
Attribution brute_force_shap(const learn::RegressionTree& tree, const double* x,
                             std::size_t p);
Attribution brute_force_shap(const learn::Ensemble& model, const double* x,
                             std::size_t p);

struct GlobalImportance {
    std::string column;
    double mean_abs_phi = 0.0;
};

// Mean |phi| per feature over the given rows, descending, ties by column order.
std::vector<GlobalImportance> global_importance(const learn::Ensemble& model,
                                                const FeatureMatrix& m,
                                                const std::vector<std::size_t>& rows);

void write_attributions_csv(const std::vector<Attribution>& rows,
                            const std::vector<std::string>& columns,
                            const std::vector<std::string>& row_ids,
                            const std::string& path);

}  // namespace gapaudit::explain
