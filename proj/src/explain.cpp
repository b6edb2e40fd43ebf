#include "gapaudit/explain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gapaudit/errors.hpp"
#include "csv_util.hpp"

namespace gapaudit::explain {

double Attribution::additivity_gap() const {
    double sum = base_value;
    for (double v : phi) sum += v;
    return std::fabs(sum - prediction);
}

namespace {

void require_shap_ready(const learn::RegressionTree& tree) {
    if (!tree.covers_present())
        throw ProtocolError("tree not SHAP-ready: node covers missing");
}

// Subset-path state for the polynomial-time recursion: d is the feature that
// entered the path (-1 for the root placeholder), z the fraction of cover
// flowing when the feature is excluded, o the indicator when it is included,
// w the accumulated permutation weight.
struct PathElem {
    int d;
    double z;
    double o;
    double w;
};

void extend(std::vector<PathElem>& m, double pz, double po, int pi) {
    const std::size_t l = m.size();
    m.push_back({pi, pz, po, l == 0 ? 1.0 : 0.0});
    for (std::size_t i = l; i-- > 0;) {
        m[i + 1].w += po * m[i].w * static_cast<double>(i + 1) /
                      static_cast<double>(l + 1);
        m[i].w = pz * m[i].w * static_cast<double>(l - i) / static_cast<double>(l + 1);
    }
}

void unwind(std::vector<PathElem>& m, std::size_t k) {
    const std::size_t l = m.size();
    const double one = m[k].o;
    const double zero = m[k].z;
    double n = m[l - 1].w;
    for (std::size_t j = l - 1; j-- > 0;) {
        if (one != 0) {
            double t = m[j].w;
            m[j].w = n * static_cast<double>(l) / (static_cast<double>(j + 1) * one);
            n = t - m[j].w * zero * static_cast<double>(l - (j + 1)) /
                    static_cast<double>(l);
        } else {
            m[j].w = m[j].w * static_cast<double>(l) /
                     (zero * static_cast<double>(l - (j + 1)));
        }
    }
    for (std::size_t j = k; j + 1 < l; ++j) {
        m[j].d = m[j + 1].d;
        m[j].z = m[j + 1].z;
        m[j].o = m[j + 1].o;
    }
    m.pop_back();
}

// Sum of the unwound weights without materializing the unwound path.
double unwound_sum(const std::vector<PathElem>& m, std::size_t k) {
    const std::size_t l = m.size();
    const double one = m[k].o;
    const double zero = m[k].z;
    double n = m[l - 1].w;
    double total = 0;
    for (std::size_t j = l - 1; j-- > 0;) {
        if (one != 0) {
            double t = n * static_cast<double>(l) / (static_cast<double>(j + 1) * one);
            total += t;
            n = m[j].w - t * zero * static_cast<double>(l - (j + 1)) /
                    static_cast<double>(l);
        } else {
            total += m[j].w * static_cast<double>(l) /
                     (zero * static_cast<double>(l - (j + 1)));
        }
    }
    return total;
}

struct TreeShapWalker {
    const learn::RegressionTree& tree;
    const double* x;
    std::vector<double>& phi;

    void recurse(int node_idx, std::vector<PathElem> m, double pz, double po, int pi) {
        extend(m, pz, po, pi);
        const learn::TreeNode& node = tree.nodes[static_cast<std::size_t>(node_idx)];
        if (node.feature < 0) {
            for (std::size_t i = 1; i < m.size(); ++i)
                phi[static_cast<std::size_t>(m[i].d)] +=
                    unwound_sum(m, i) * (m[i].o - m[i].z) * node.leaf_value;
            return;
        }
        const learn::TreeNode& left = tree.nodes[static_cast<std::size_t>(node.left)];
        const learn::TreeNode& right = tree.nodes[static_cast<std::size_t>(node.right)];
        const bool goes_left = x[node.feature] < node.threshold;
        const int hot = goes_left ? node.left : node.right;
        const int cold = goes_left ? node.right : node.left;
        const double r_hot = goes_left ? left.cover : right.cover;
        const double r_cold = goes_left ? right.cover : left.cover;

        double iz = 1, io = 1;
        for (std::size_t k = 0; k < m.size(); ++k) {
            if (m[k].d == node.feature) {
                iz = m[k].z;
                io = m[k].o;
                unwind(m, k);
                break;
            }
        }
        recurse(hot, m, iz * r_hot / node.cover, io, node.feature);
        recurse(cold, std::move(m), iz * r_cold / node.cover, 0.0, node.feature);
    }
};

}  // namespace

Attribution tree_shap(const learn::RegressionTree& tree, const double* x, std::size_t p) {
    require_shap_ready(tree);
    if (tree.max_feature_index() >= static_cast<int>(p))
        throw DataError("tree splits on features beyond the instance length");
    Attribution out;
    out.phi.assign(p, 0.0);
    TreeShapWalker{tree, x, out.phi}.recurse(0, {}, 1.0, 1.0, -1);
    out.base_value = tree.root_expectation();
    out.prediction = tree.predict(x);
    return out;
}

Attribution ensemble_shap(const learn::Ensemble& model, const double* x, std::size_t p) {
    if (model.trees.empty()) throw DataError("ensemble without trees");
    Attribution out;
    out.phi.assign(p, 0.0);
    double base = 0;
    for (const auto& tree : model.trees) {
        Attribution one = tree_shap(tree, x, p);
        for (std::size_t i = 0; i < p; ++i) out.phi[i] += one.phi[i];
        base += one.base_value;
    }
    if (model.kind == learn::EnsembleKind::forest_average) {
        const double t = static_cast<double>(model.trees.size());
        for (double& v : out.phi) v /= t;
        out.base_value = base / t;
    } else {
        for (double& v : out.phi) v *= model.learning_rate;
        out.base_value = model.base_value + model.learning_rate * base;
    }
    out.prediction = model.predict(x);
    return out;
}

namespace {

// Tree-conditional expectation: features in the mask follow x, the rest
// marginalize by cover-weighted descent.
double cond_exp(const learn::RegressionTree& tree, int node_idx, const double* x,
                std::uint32_t mask) {
    const learn::TreeNode& node = tree.nodes[static_cast<std::size_t>(node_idx)];
    if (node.feature < 0) return node.leaf_value;
    if (mask & (1u << node.feature)) {
        int next = x[node.feature] < node.threshold ? node.left : node.right;
        return cond_exp(tree, next, x, mask);
    }
    const learn::TreeNode& left = tree.nodes[static_cast<std::size_t>(node.left)];
    const learn::TreeNode& right = tree.nodes[static_cast<std::size_t>(node.right)];
    return (left.cover * cond_exp(tree, node.left, x, mask) +
            right.cover * cond_exp(tree, node.right, x, mask)) /
           node.cover;
}

std::vector<double> shapley_from_values(const std::vector<double>& v, std::size_t p) {
    std::vector<double> factorial(p + 1, 1.0);
    for (std::size_t i = 1; i <= p; ++i)
        factorial[i] = factorial[i - 1] * static_cast<double>(i);
    std::vector<double> phi(p, 0.0);
    const std::uint32_t full = p == 32 ? ~0u : (1u << p) - 1;
    for (std::uint32_t s = 0; s <= full; ++s) {
        const std::size_t cardinality = static_cast<std::size_t>(__builtin_popcount(s));
        for (std::size_t i = 0; i < p; ++i) {
            if (s & (1u << i)) continue;
            double weight = factorial[cardinality] * factorial[p - cardinality - 1] /
                            factorial[p];
            phi[i] += weight * (v[s | (1u << i)] - v[s]);
        }
        if (s == full) break;
    }
    return phi;
}

}  // namespace

Attribution brute_force_shap(const learn::RegressionTree& tree, const double* x,
                             std::size_t p) {
    require_shap_ready(tree);
    if (p > 20) throw DataError("brute-force enumeration guarded to p <= 20");
    if (tree.max_feature_index() >= static_cast<int>(p))
        throw DataError("tree splits on features beyond the instance length");
    const std::uint32_t n_masks = 1u << p;
    std::vector<double> v(n_masks);
    for (std::uint32_t s = 0; s < n_masks; ++s) v[s] = cond_exp(tree, 0, x, s);
    Attribution out;
    out.phi = shapley_from_values(v, p);
    out.base_value = v[0];
    out.prediction = tree.predict(x);
    return out;
}

Attribution brute_force_shap(const learn::Ensemble& model, const double* x,
                             std::size_t p) {
    if (model.trees.empty()) throw DataError("ensemble without trees");
    Attribution out;
    out.phi.assign(p, 0.0);
    double base = 0;
    for (const auto& tree : model.trees) {
        Attribution one = brute_force_shap(tree, x, p);
        for (std::size_t i = 0; i < p; ++i) out.phi[i] += one.phi[i];
        base += one.base_value;
    }
    if (model.kind == learn::EnsembleKind::forest_average) {
        const double t = static_cast<double>(model.trees.size());
        for (double& v : out.phi) v /= t;
        out.base_value = base / t;
    } else {
        for (double& v : out.phi) v *= model.learning_rate;
        out.base_value = model.base_value + model.learning_rate * base;
    }
    out.prediction = model.predict(x);
    return out;
}

std::vector<GlobalImportance> global_importance(const learn::Ensemble& model,
                                                const FeatureMatrix& m,
                                                const std::vector<std::size_t>& rows) {
    if (rows.empty()) throw DataError("global importance needs at least one row");
    std::vector<double> acc(m.cols(), 0.0);
    for (std::size_t r : rows) {
        Attribution a = ensemble_shap(model, m.row(r), m.cols());
        for (std::size_t c = 0; c < m.cols(); ++c) acc[c] += std::fabs(a.phi[c]);
    }
    std::vector<GlobalImportance> out(m.cols());
    for (std::size_t c = 0; c < m.cols(); ++c) {
        out[c].column = m.column_names()[c];
        out[c].mean_abs_phi = acc[c] / static_cast<double>(rows.size());
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const GlobalImportance& a, const GlobalImportance& b) {
                         return a.mean_abs_phi > b.mean_abs_phi;
                     });
    return out;
}

void write_attributions_csv(const std::vector<Attribution>& rows,
                            const std::vector<std::string>& columns,
                            const std::vector<std::string>& row_ids,
                            const std::string& path) {
    if (rows.size() != row_ids.size())
        throw DataError("attribution/id count mismatch");
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << "row_id,prediction,base_value";
    for (const auto& c : columns) out << ',' << detail::csv_escape("phi_" + c);
    out << '\n';
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].phi.size() != columns.size())
            throw DataError("attribution width mismatch");
        out << detail::csv_escape(row_ids[r]) << ','
            << detail::fmt_double(rows[r].prediction) << ','
            << detail::fmt_double(rows[r].base_value);
        for (double v : rows[r].phi) out << ',' << detail::fmt_double(v);
        out << '\n';
    }
    if (!out) throw ConfigError("write failed: " + path);
}

}  // namespace gapaudit::explain
