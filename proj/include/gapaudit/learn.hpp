#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gapaudit/matrix.hpp"

namespace gapaudit::learn {

// Deterministic train/test split: Fisher-Yates shuffle of 0..n-1 driven by
// SplitMix64(seed), first round(train_fraction*n) indices train.
struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 42;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
};

SplitSpec make_split(std::size_t n, double train_fraction = 0.8, std::uint64_t seed = 42);

// Per-column mean/std fitted on training rows only (population std;
// constant columns scale by 1).
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stdev;
    std::size_t n_rows_fit = 0;

    void fit(const FeatureMatrix& train);
    std::vector<double> transform_row(const double* row) const;
};

struct RidgeParams {
    double alpha = 1.0;
};

struct RidgeModel {
    RidgeParams params;
    Standardizer scaler;
    std::vector<double> weights;  // on standardized features
    double intercept = 0.0;       // training-target mean

    double predict(const double* row) const;
};

// Solves (Z^T Z + alpha I) w = Z^T (y - ybar) by Cholesky factorization.
RidgeModel fit_ridge(const FeatureMatrix& train, const RidgeParams& params);

struct TreeParams {
    int max_depth = -1;  // -1 = unbounded
    std::size_t min_samples_leaf = 1;
    std::size_t min_samples_split = 2;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double leaf_value = 0.0;
    double cover = 0.0;  // training-row weight reaching this node
    double gain = 0.0;   // loss reduction of the split (0 at leaves)
};

// Binary CART regression tree. Routing: x[feature] < threshold goes left.
class RegressionTree {
public:
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    double predict(const double* x) const;
    // Index of the leaf x falls into.
    int leaf_index(const double* x) const;
    // Cover-weighted expectation of the leaf values (the marginal prediction).
    double root_expectation() const;
    // Total split gain per feature, accumulated over all internal nodes.
    void accumulate_gain(std::vector<double>& per_feature) const;
    int max_feature_index() const;
    bool covers_present() const;
};

// Greedy exact splitting: every feature, midpoints of consecutive distinct
// sorted values, maximal variance reduction; ties resolved toward the lowest
// feature index then the lowest threshold. row_weights, when given, must
// match train.rows().
RegressionTree fit_tree(const FeatureMatrix& train, const TreeParams& params,
                        const std::vector<double>* row_weights = nullptr);

struct ForestParams {
    std::size_t n_estimators = 100;
    TreeParams tree;
    bool bootstrap = true;
    int feature_subsample_count = -1;  // -1 = max(1, p/3)
    std::uint64_t seed = 42;
};

struct GbtParams {
    std::size_t n_estimators = 100;
    double learning_rate = 0.1;
    int max_depth = 6;
    std::size_t min_samples_leaf = 1;
    std::uint64_t seed = 42;
};

enum class EnsembleKind { forest_average, boosted_sum };

struct Ensemble {
    EnsembleKind kind = EnsembleKind::forest_average;
    double base_value = 0.0;      // boosting init (training-target mean); 0 for forests
    double learning_rate = 1.0;   // boosting shrinkage; unused for forests
    std::vector<RegressionTree> trees;

    double predict(const double* x) const;
    std::vector<double> predict_rows(const FeatureMatrix& m) const;
};

// Bagged trees on bootstrap resamples (per-tree generator seeded with
// seed ^ tree_index) with per-split feature subsampling; prediction is the
// tree mean.
Ensemble fit_forest(const FeatureMatrix& train, const ForestParams& params);

// Squared-loss gradient boosting on the training-target mean; no row or
// feature subsampling.
Ensemble fit_gbt(const FeatureMatrix& train, const GbtParams& params);

struct Metrics {
    double r2 = 0.0;
    double mae = 0.0;
    double mse = 0.0;
    double residual_mean = 0.0;  // over (pred - true)
    double residual_std = 0.0;
};

using AnyModel = std::variant<RidgeModel, Ensemble>;

double predict_any(const AnyModel& model, const double* row);
Metrics evaluate(const AnyModel& model, const FeatureMatrix& test);
Metrics evaluate_predictions(const std::vector<double>& y_true,
                             const std::vector<double>& y_pred);

// A named, fit-ready model configuration (preset or user-supplied).
struct ModelConfig {
    enum class Kind { ridge, forest, gbt };
    std::string name;
    Kind kind = Kind::gbt;
    RidgeParams ridge;
    ForestParams forest;
    GbtParams gbt;
    // Upstream settings carried for the record but without effect here
    // (e.g. a leaf L2 penalty this learner does not implement).
    std::string inert_note;

    // Preset family for best-of-configuration grouping (rf/xgb/cat/ridge).
    std::string family() const;
};

AnyModel fit_model(const ModelConfig& cfg, const FeatureMatrix& train);

// The named hyperparameter profiles shipped with the pipeline.
const std::map<std::string, ModelConfig>& builtin_presets();
ModelConfig preset(const std::string& name);  // throws ConfigError if unknown

// JSON model files: {kind, params, base_value, trees:[{nodes:[{f,t,l,r,v,cover}]}]}.
void save_model(const AnyModel& model, const std::string& path);
AnyModel load_model(const std::string& path);

}  // namespace gapaudit::learn
