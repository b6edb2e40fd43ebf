#include "gapaudit/learn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "gapaudit/errors.hpp"
#include "gapaudit/rng.hpp"

namespace gapaudit::learn {

SplitSpec make_split(std::size_t n, double train_fraction, std::uint64_t seed) {
    if (n < 5) throw DataError("split needs at least 5 rows, got " + std::to_string(n));
    if (train_fraction <= 0 || train_fraction >= 1)
        throw ConfigError("train_fraction must lie strictly between 0 and 1");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        std::size_t j = rng.bounded(i + 1);
        std::swap(order[i], order[j]);
    }
    auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
    SplitSpec spec;
    spec.train_fraction = train_fraction;
    spec.seed = seed;
    spec.train_indices.assign(order.begin(), order.begin() + n_train);
    spec.test_indices.assign(order.begin() + n_train, order.end());
    return spec;
}

void Standardizer::fit(const FeatureMatrix& train) {
    const std::size_t n = train.rows();
    const std::size_t p = train.cols();
    if (n == 0) throw DataError("standardizer fitted on empty matrix");
    mean.assign(p, 0.0);
    stdev.assign(p, 1.0);
    for (std::size_t c = 0; c < p; ++c) {
        double m = 0;
        for (std::size_t r = 0; r < n; ++r) m += train.at(r, c);
        m /= static_cast<double>(n);
        double ss = 0;
        for (std::size_t r = 0; r < n; ++r) {
            double d = train.at(r, c) - m;
            ss += d * d;
        }
        double sd = std::sqrt(ss / static_cast<double>(n));
        mean[c] = m;
        stdev[c] = sd > 0 ? sd : 1.0;  // constant columns pass through centered
    }
    n_rows_fit = n;
}

std::vector<double> Standardizer::transform_row(const double* row) const {
    std::vector<double> z(mean.size());
    for (std::size_t c = 0; c < mean.size(); ++c) z[c] = (row[c] - mean[c]) / stdev[c];
    return z;
}

namespace {

// Solves A x = b for symmetric positive-definite A (row-major p x p).
std::vector<double> cholesky_solve(std::vector<double> a, std::vector<double> b,
                                   std::size_t p) {
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a[i * p + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * p + k] * a[j * p + k];
            if (i == j) {
                if (s <= 0) throw DataError("normal equations not positive definite");
                a[i * p + i] = std::sqrt(s);
            } else {
                a[i * p + j] = s / a[j * p + j];
            }
        }
    }
    for (std::size_t i = 0; i < p; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= a[i * p + k] * b[k];
        b[i] = s / a[i * p + i];
    }
    for (std::size_t i = p; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < p; ++k) s -= a[k * p + i] * b[k];
        b[i] = s / a[i * p + i];
    }
    return b;
}

}  // namespace

double RidgeModel::predict(const double* row) const {
    std::vector<double> z = scaler.transform_row(row);
    double y = intercept;
    for (std::size_t c = 0; c < weights.size(); ++c) y += weights[c] * z[c];
    return y;
}

RidgeModel fit_ridge(const FeatureMatrix& train, const RidgeParams& params) {
    if (params.alpha < 0) throw ConfigError("ridge alpha must be non-negative");
    train.validate();
    const std::size_t n = train.rows();
    const std::size_t p = train.cols();
    if (n == 0) throw DataError("ridge fitted on empty matrix");

    RidgeModel model;
    model.params = params;
    model.scaler.fit(train);

    double ybar = 0;
    for (double v : train.target()) ybar += v;
    ybar /= static_cast<double>(n);
    model.intercept = ybar;

    std::vector<std::vector<double>> z(n);
    for (std::size_t r = 0; r < n; ++r) z[r] = model.scaler.transform_row(train.row(r));

    std::vector<double> gram(p * p, 0.0);
    std::vector<double> rhs(p, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        double yc = train.target()[r] - ybar;
        for (std::size_t i = 0; i < p; ++i) {
            rhs[i] += z[r][i] * yc;
            for (std::size_t j = i; j < p; ++j) gram[i * p + j] += z[r][i] * z[r][j];
        }
    }
    for (std::size_t i = 0; i < p; ++i) {
        gram[i * p + i] += params.alpha;
        for (std::size_t j = i + 1; j < p; ++j) gram[j * p + i] = gram[i * p + j];
    }
    model.weights = cholesky_solve(std::move(gram), std::move(rhs), p);
    return model;
}

double RegressionTree::predict(const double* x) const {
    return nodes[static_cast<std::size_t>(leaf_index(x))].leaf_value;
}

int RegressionTree::leaf_index(const double* x) const {
    if (nodes.empty()) throw DataError("empty tree");
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
        const TreeNode& nd = nodes[static_cast<std::size_t>(i)];
        i = x[nd.feature] < nd.threshold ? nd.left : nd.right;
    }
    return i;
}

double RegressionTree::root_expectation() const {
    if (nodes.empty()) throw DataError("empty tree");
    // Cover-weighted mean of leaf values below each node, evaluated at the root.
    struct Walker {
        const std::vector<TreeNode>& nodes;
        double at(int i) const {
            const TreeNode& nd = nodes[static_cast<std::size_t>(i)];
            if (nd.feature < 0) return nd.leaf_value;
            const TreeNode& l = nodes[static_cast<std::size_t>(nd.left)];
            const TreeNode& r = nodes[static_cast<std::size_t>(nd.right)];
            return (l.cover * at(nd.left) + r.cover * at(nd.right)) / nd.cover;
        }
    };
    return Walker{nodes}.at(0);
}

void RegressionTree::accumulate_gain(std::vector<double>& per_feature) const {
    for (const TreeNode& nd : nodes) {
        if (nd.feature < 0) continue;
        if (static_cast<std::size_t>(nd.feature) >= per_feature.size())
            throw DataError("gain accumulator smaller than tree feature space");
        per_feature[static_cast<std::size_t>(nd.feature)] += nd.gain;
    }
}

int RegressionTree::max_feature_index() const {
    int best = -1;
    for (const TreeNode& nd : nodes) best = std::max(best, nd.feature);
    return best;
}

bool RegressionTree::covers_present() const {
    for (const TreeNode& nd : nodes)
        if (!(nd.cover > 0)) return false;
    return !nodes.empty();
}

namespace {

struct TreeBuilder {
    const FeatureMatrix& x;
    const std::vector<double>& y;
    const std::vector<double>* row_weights;
    const TreeParams& params;
    int feature_count;  // features examined per split; <=0 means all
    SplitMix64* rng;
    std::vector<TreeNode> nodes;
    std::vector<std::size_t> scratch_features;

    double weight_of(std::size_t row) const {
        return row_weights ? (*row_weights)[row] : 1.0;
    }

    std::vector<int> split_candidates() {
        const std::size_t p = x.cols();
        if (feature_count <= 0 || static_cast<std::size_t>(feature_count) >= p) {
            std::vector<int> all(p);
            std::iota(all.begin(), all.end(), 0);
            return all;
        }
        if (scratch_features.size() != p) {
            scratch_features.resize(p);
            std::iota(scratch_features.begin(), scratch_features.end(), 0);
        }
        for (std::size_t i = 0; i < static_cast<std::size_t>(feature_count); ++i) {
            std::size_t j = i + rng->bounded(p - i);
            std::swap(scratch_features[i], scratch_features[j]);
        }
        std::vector<int> picked(scratch_features.begin(),
                                scratch_features.begin() + feature_count);
        std::sort(picked.begin(), picked.end());
        return picked;
    }

    int build(const std::vector<std::size_t>& rows, int depth) {
        if (rows.empty()) throw DataError("tree node with no rows");
        const int idx = static_cast<int>(nodes.size());
        nodes.emplace_back();

        double w_total = 0, wy = 0, wy2 = 0;
        for (std::size_t r : rows) {
            double w = weight_of(r);
            w_total += w;
            wy += w * y[r];
            wy2 += w * y[r] * y[r];
        }
        const double node_mean = wy / w_total;
        const double node_sse = std::max(0.0, wy2 - wy * wy / w_total);
        nodes[idx].cover = w_total;
        nodes[idx].leaf_value = node_mean;

        bool depth_ok = params.max_depth < 0 || depth < params.max_depth;
        if (!depth_ok || rows.size() < params.min_samples_split || node_sse <= 0)
            return idx;

        int best_feature = -1;
        double best_threshold = 0;
        double best_gain = 0;
        std::vector<std::pair<double, std::size_t>> sorted;
        sorted.reserve(rows.size());
        for (int f : split_candidates()) {
            sorted.clear();
            for (std::size_t r : rows)
                sorted.emplace_back(x.at(r, static_cast<std::size_t>(f)), r);
            std::sort(sorted.begin(), sorted.end());
            double lw = 0, lwy = 0, lwy2 = 0;
            for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
                double w = weight_of(sorted[k].second);
                double yv = y[sorted[k].second];
                lw += w;
                lwy += w * yv;
                lwy2 += w * yv * yv;
                double vl = sorted[k].first, vr = sorted[k + 1].first;
                if (vl == vr) continue;
                std::size_t left_n = k + 1, right_n = rows.size() - left_n;
                if (left_n < params.min_samples_leaf || right_n < params.min_samples_leaf)
                    continue;
                double threshold = vl + (vr - vl) / 2;
                if (!(vl < threshold) || threshold > vr) continue;
                double rw = w_total - lw, rwy = wy - lwy, rwy2 = wy2 - lwy2;
                double sse_l = std::max(0.0, lwy2 - lwy * lwy / lw);
                double sse_r = std::max(0.0, rwy2 - rwy * rwy / rw);
                double gain = node_sse - sse_l - sse_r;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = f;
                    best_threshold = threshold;
                }
            }
        }
        if (best_feature < 0 || best_gain <= 0) return idx;

        std::vector<std::size_t> left_rows, right_rows;
        for (std::size_t r : rows) {
            if (x.at(r, static_cast<std::size_t>(best_feature)) < best_threshold)
                left_rows.push_back(r);
            else
                right_rows.push_back(r);
        }
        nodes[idx].feature = best_feature;
        nodes[idx].threshold = best_threshold;
        nodes[idx].gain = best_gain;
        int left = build(left_rows, depth + 1);
        int right = build(right_rows, depth + 1);
        nodes[idx].left = left;
        nodes[idx].right = right;
        return idx;
    }
};

RegressionTree fit_tree_rows(const FeatureMatrix& train, const std::vector<double>& y,
                             const std::vector<std::size_t>& rows,
                             const std::vector<double>* row_weights,
                             const TreeParams& params, int feature_count,
                             SplitMix64* rng) {
    if (params.min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be >= 1");
    if (params.min_samples_split < 2)
        throw ConfigError("min_samples_split must be >= 2");
    TreeBuilder builder{train, y, row_weights, params, feature_count, rng, {}, {}};
    builder.build(rows, 0);
    RegressionTree tree;
    tree.nodes = std::move(builder.nodes);
    return tree;
}

}  // namespace

RegressionTree fit_tree(const FeatureMatrix& train, const TreeParams& params,
                        const std::vector<double>* row_weights) {
    if (train.rows() == 0) throw DataError("tree fitted on empty matrix");
    if (row_weights && row_weights->size() != train.rows())
        throw DataError("row_weights length mismatch");
    std::vector<std::size_t> rows(train.rows());
    std::iota(rows.begin(), rows.end(), 0);
    return fit_tree_rows(train, train.target(), rows, row_weights, params, 0, nullptr);
}

double Ensemble::predict(const double* x) const {
    if (trees.empty()) return base_value;
    double acc = 0;
    for (const auto& t : trees) acc += t.predict(x);
    if (kind == EnsembleKind::forest_average)
        return acc / static_cast<double>(trees.size());
    return base_value + learning_rate * acc;
}

std::vector<double> Ensemble::predict_rows(const FeatureMatrix& m) const {
    std::vector<double> out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) out[r] = predict(m.row(r));
    return out;
}

Ensemble fit_forest(const FeatureMatrix& train, const ForestParams& params) {
    if (params.n_estimators < 1) throw ConfigError("n_estimators must be >= 1");
    train.validate();
    const std::size_t n = train.rows();
    if (n == 0) throw DataError("forest fitted on empty matrix");
    int feat_count = params.feature_subsample_count;
    if (feat_count < 0)
        feat_count = std::max<int>(1, static_cast<int>(train.cols() / 3));

    Ensemble ens;
    ens.kind = EnsembleKind::forest_average;
    ens.trees.reserve(params.n_estimators);
    for (std::size_t t = 0; t < params.n_estimators; ++t) {
        SplitMix64 rng(params.seed ^ static_cast<std::uint64_t>(t));
        std::vector<std::size_t> rows(n);
        if (params.bootstrap) {
            for (std::size_t i = 0; i < n; ++i) rows[i] = rng.bounded(n);
        } else {
            std::iota(rows.begin(), rows.end(), 0);
        }
        ens.trees.push_back(fit_tree_rows(train, train.target(), rows, nullptr,
                                          params.tree, feat_count, &rng));
    }
    return ens;
}

Ensemble fit_gbt(const FeatureMatrix& train, const GbtParams& params) {
    if (params.n_estimators < 1) throw ConfigError("n_estimators must be >= 1");
    if (params.learning_rate <= 0 || params.learning_rate > 1)
        throw ConfigError("learning_rate must lie in (0, 1]");
    train.validate();
    const std::size_t n = train.rows();
    if (n == 0) throw DataError("gbt fitted on empty matrix");

    Ensemble ens;
    ens.kind = EnsembleKind::boosted_sum;
    ens.learning_rate = params.learning_rate;
    double mean = 0;
    for (double v : train.target()) mean += v;
    ens.base_value = mean / static_cast<double>(n);

    TreeParams tree_params;
    tree_params.max_depth = params.max_depth;
    tree_params.min_samples_leaf = params.min_samples_leaf;

    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    std::vector<double> f(n, ens.base_value);
    std::vector<double> residual(n);
    ens.trees.reserve(params.n_estimators);
    for (std::size_t t = 0; t < params.n_estimators; ++t) {
        for (std::size_t r = 0; r < n; ++r) residual[r] = train.target()[r] - f[r];
        RegressionTree tree =
            fit_tree_rows(train, residual, rows, nullptr, tree_params, 0, nullptr);
        for (std::size_t r = 0; r < n; ++r)
            f[r] += params.learning_rate * tree.predict(train.row(r));
        ens.trees.push_back(std::move(tree));
    }
    return ens;
}

Metrics evaluate_predictions(const std::vector<double>& y_true,
                             const std::vector<double>& y_pred) {
    if (y_true.size() != y_pred.size() || y_true.empty())
        throw DataError("metrics need equal-length non-empty vectors");
    const double n = static_cast<double>(y_true.size());
    double ybar = 0;
    for (double v : y_true) ybar += v;
    ybar /= n;
    double ss_tot = 0, ss_res = 0, abs_sum = 0, res_sum = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        double err = y_true[i] - y_pred[i];
        ss_res += err * err;
        abs_sum += std::fabs(err);
        ss_tot += (y_true[i] - ybar) * (y_true[i] - ybar);
        res_sum += y_pred[i] - y_true[i];
    }
    if (ss_tot <= 0) throw DataError("zero test-target variance: r2 undefined");
    Metrics m;
    m.r2 = 1.0 - ss_res / ss_tot;
    m.mae = abs_sum / n;
    m.mse = ss_res / n;
    m.residual_mean = res_sum / n;
    double var = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        double r = y_pred[i] - y_true[i] - m.residual_mean;
        var += r * r;
    }
    m.residual_std = std::sqrt(var / n);
    return m;
}

double predict_any(const AnyModel& model, const double* row) {
    return std::visit([&](const auto& m) { return m.predict(row); }, model);
}

Metrics evaluate(const AnyModel& model, const FeatureMatrix& test) {
    std::vector<double> pred(test.rows());
    for (std::size_t r = 0; r < test.rows(); ++r) pred[r] = predict_any(model, test.row(r));
    return evaluate_predictions(test.target(), pred);
}

std::string ModelConfig::family() const {
    auto dash = name.find('-');
    return dash == std::string::npos ? name : name.substr(0, dash);
}

AnyModel fit_model(const ModelConfig& cfg, const FeatureMatrix& train) {
    switch (cfg.kind) {
        case ModelConfig::Kind::ridge: return fit_ridge(train, cfg.ridge);
        case ModelConfig::Kind::forest: return fit_forest(train, cfg.forest);
        case ModelConfig::Kind::gbt: return fit_gbt(train, cfg.gbt);
    }
    throw ConfigError("invalid model kind");
}

const std::map<std::string, ModelConfig>& builtin_presets() {
    static const std::map<std::string, ModelConfig> presets = [] {
        std::map<std::string, ModelConfig> out;
        auto add = [&out](ModelConfig cfg) { out[cfg.name] = cfg; };

        ModelConfig ridge;
        ridge.name = "ridge";
        ridge.kind = ModelConfig::Kind::ridge;
        ridge.ridge.alpha = 1.0;
        add(ridge);

        auto forest = [](std::string name, std::size_t n, int depth,
                         std::size_t leaf) {
            ModelConfig cfg;
            cfg.name = std::move(name);
            cfg.kind = ModelConfig::Kind::forest;
            cfg.forest.n_estimators = n;
            cfg.forest.tree.max_depth = depth;
            cfg.forest.tree.min_samples_leaf = leaf;
            return cfg;
        };
        add(forest("rf-conservative", 500, 13, 5));
        add(forest("rf-balanced", 600, -1, 1));
        add(forest("rf-aggressive", 700, -1, 1));

        auto gbt = [](std::string name, std::size_t n, double lr, int depth,
                      std::string note) {
            ModelConfig cfg;
            cfg.name = std::move(name);
            cfg.kind = ModelConfig::Kind::gbt;
            cfg.gbt.n_estimators = n;
            cfg.gbt.learning_rate = lr;
            cfg.gbt.max_depth = depth;
            cfg.inert_note = std::move(note);
            return cfg;
        };
        add(gbt("xgb-conservative", 500, 0.05, 6, ""));
        add(gbt("xgb-balanced", 600, 0.10, 8, ""));
        add(gbt("xgb-aggressive", 700, 0.30, 6, ""));
        add(gbt("cat-conservative", 1000, 0.01, 6, "l2_leaf_reg=5 (no effect here)"));
        add(gbt("cat-balanced", 3000, 0.05, 10, "l2_leaf_reg=1 (no effect here)"));
        add(gbt("cat-aggressive", 2000, 0.03, 8, "l2_leaf_reg=3 (no effect here)"));
        return out;
    }();
    return presets;
}

ModelConfig preset(const std::string& name) {
    const auto& all = builtin_presets();
    auto it = all.find(name);
    if (it == all.end()) throw ConfigError("unknown model preset '" + name + "'");
    return it->second;
}

namespace {

using nlohmann::json;

json tree_to_json(const RegressionTree& tree) {
    json nodes = json::array();
    for (const TreeNode& nd : tree.nodes) {
        nodes.push_back(json{{"f", nd.feature},
                             {"t", nd.threshold},
                             {"l", nd.left},
                             {"r", nd.right},
                             {"v", nd.leaf_value},
                             {"cover", nd.cover},
                             {"gain", nd.gain}});
    }
    return json{{"nodes", nodes}};
}

RegressionTree tree_from_json(const json& j) {
    RegressionTree tree;
    for (const auto& nj : j.at("nodes")) {
        TreeNode nd;
        nd.feature = nj.at("f").get<int>();
        nd.threshold = nj.at("t").get<double>();
        nd.left = nj.at("l").get<int>();
        nd.right = nj.at("r").get<int>();
        nd.leaf_value = nj.at("v").get<double>();
        nd.cover = nj.at("cover").get<double>();
        nd.gain = nj.value("gain", 0.0);
        tree.nodes.push_back(nd);
    }
    if (tree.nodes.empty()) throw DataError("model file holds an empty tree");
    return tree;
}

}  // namespace

void save_model(const AnyModel& model, const std::string& path) {
    json j;
    if (const RidgeModel* ridge = std::get_if<RidgeModel>(&model)) {
        j["kind"] = "ridge";
        j["alpha"] = ridge->params.alpha;
        j["mean"] = ridge->scaler.mean;
        j["stdev"] = ridge->scaler.stdev;
        j["n_rows_fit"] = ridge->scaler.n_rows_fit;
        j["weights"] = ridge->weights;
        j["intercept"] = ridge->intercept;
    } else {
        const Ensemble& ens = std::get<Ensemble>(model);
        j["kind"] = ens.kind == EnsembleKind::forest_average ? "forest" : "gbt";
        j["base_value"] = ens.base_value;
        j["learning_rate"] = ens.learning_rate;
        json trees = json::array();
        for (const auto& t : ens.trees) trees.push_back(tree_to_json(t));
        j["trees"] = trees;
    }
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw ConfigError("write failed: " + path);
}

AnyModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ParseError(path + ": malformed model JSON");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "ridge") {
        RidgeModel m;
        m.params.alpha = j.at("alpha").get<double>();
        m.scaler.mean = j.at("mean").get<std::vector<double>>();
        m.scaler.stdev = j.at("stdev").get<std::vector<double>>();
        m.scaler.n_rows_fit = j.value("n_rows_fit", std::size_t{0});
        m.weights = j.at("weights").get<std::vector<double>>();
        m.intercept = j.at("intercept").get<double>();
        if (m.scaler.mean.size() != m.weights.size() ||
            m.scaler.stdev.size() != m.weights.size())
            throw DataError(path + ": inconsistent ridge dimensions");
        return m;
    }
    if (kind != "forest" && kind != "gbt")
        throw DataError(path + ": unknown model kind '" + kind + "'");
    Ensemble ens;
    ens.kind = kind == "forest" ? EnsembleKind::forest_average : EnsembleKind::boosted_sum;
    ens.base_value = j.at("base_value").get<double>();
    ens.learning_rate = j.at("learning_rate").get<double>();
    for (const auto& tj : j.at("trees")) ens.trees.push_back(tree_from_json(tj));
    if (ens.trees.empty()) throw DataError(path + ": ensemble without trees");
    return ens;
}

}  // namespace gapaudit::learn
