#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gapaudit/errors.hpp"
#include "gapaudit/explain.hpp"
#include "gapaudit/learn.hpp"
#include "gapaudit/matrix.hpp"
#include "gapaudit/rng.hpp"

using namespace gapaudit;
using namespace gapaudit::explain;

namespace {

FeatureMatrix make_matrix(const std::vector<std::string>& names,
                          const std::vector<std::vector<double>>& rows,
                          const std::vector<double>& y) {
    FeatureMatrix m(names, rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) m.at(r, c) = rows[r][c];
        m.target()[r] = y[r];
        m.row_ids()[r] = "r" + std::to_string(r);
    }
    return m;
}

learn::RegressionTree step_tree() {
    FeatureMatrix data = make_matrix({"x0"}, {{1}, {2}, {3}, {4}}, {0, 0, 10, 10});
    return learn::fit_tree(data, learn::TreeParams{});
}

// Full factorial on two binary features, y = 10*x0 + 5*x1.
learn::RegressionTree additive_tree() {
    FeatureMatrix data = make_matrix({"x0", "x1"},
                                     {{0, 0}, {0, 1}, {1, 0}, {1, 1}},
                                     {0, 5, 10, 15});
    return learn::fit_tree(data, learn::TreeParams{});
}

void check_close(const std::vector<double>& a, const std::vector<double>& b,
                 double tol) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(std::fabs(a[i] - b[i]) <= tol);
}

}  // namespace

TEST_CASE("single split attributes the full jump to its feature") {
    learn::RegressionTree t = step_tree();
    double hi = 3.0;
    Attribution a = tree_shap(t, &hi, 1);
    CHECK(a.base_value == doctest::Approx(5.0).epsilon(1e-14));
    CHECK(a.prediction == 10.0);
    REQUIRE(a.phi.size() == 1);
    CHECK(a.phi[0] == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(a.additivity_gap() <= 1e-12);

    double lo = 1.0;
    Attribution b = tree_shap(t, &lo, 1);
    CHECK(b.phi[0] == doctest::Approx(-5.0).epsilon(1e-12));
}

TEST_CASE("additive two-feature tree splits credit by effect size") {
    learn::RegressionTree t = additive_tree();
    REQUIRE(t.nodes.size() == 7);
    double x[2] = {1.0, 1.0};
    Attribution a = tree_shap(t, x, 2);
    CHECK(a.base_value == doctest::Approx(7.5).epsilon(1e-14));
    CHECK(a.prediction == 15.0);
    CHECK(a.phi[0] == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(a.phi[1] == doctest::Approx(2.5).epsilon(1e-12));

    Attribution brute = brute_force_shap(t, x, 2);
    check_close(a.phi, brute.phi, 1e-12);
    CHECK(brute.base_value == doctest::Approx(a.base_value).epsilon(1e-14));
}

TEST_CASE("interchangeable features share credit despite an asymmetric tree") {
    FeatureMatrix data = make_matrix({"x0", "x1"},
                                     {{0, 0}, {0, 1}, {1, 0}, {1, 1}},
                                     {0, 10, 10, 20});
    learn::RegressionTree t = learn::fit_tree(data, learn::TreeParams{});
    CHECK(t.nodes[0].feature == 0);  // tie broken toward the first column
    double x[2] = {1.0, 1.0};
    Attribution a = tree_shap(t, x, 2);
    CHECK(a.phi[0] == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(a.phi[1] == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("features the tree never touches get exactly zero") {
    learn::RegressionTree t = additive_tree();
    double x[4] = {1.0, 0.0, 99.0, -3.5};
    Attribution a = tree_shap(t, x, 4);
    CHECK(a.phi[2] == 0.0);
    CHECK(a.phi[3] == 0.0);
    Attribution brute = brute_force_shap(t, x, 4);
    CHECK(brute.phi[2] == 0.0);
    CHECK(brute.phi[3] == 0.0);
    check_close(a.phi, brute.phi, 1e-12);
}

TEST_CASE("path method agrees with subset enumeration on random trees") {
    SplitMix64 gen(2024);
    const std::size_t n = 36, p = 5;
    for (int rep = 0; rep < 8; ++rep) {
        std::vector<std::vector<double>> rows(n, std::vector<double>(p));
        std::vector<double> y(n);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < p; ++c) rows[r][c] = 10.0 * gen.next_double();
            y[r] = 6.0 * gen.next_double() - 3.0;
        }
        std::vector<std::string> names;
        for (std::size_t c = 0; c < p; ++c) names.push_back("x" + std::to_string(c));
        FeatureMatrix data = make_matrix(names, rows, y);
        learn::TreeParams params;
        params.max_depth = 4;
        params.min_samples_leaf = 2;
        learn::RegressionTree t = learn::fit_tree(data, params);

        for (int inst = 0; inst < 5; ++inst) {
            std::vector<double> x(p);
            for (std::size_t c = 0; c < p; ++c) x[c] = 10.0 * gen.next_double();
            Attribution fast = tree_shap(t, x.data(), p);
            Attribution slow = brute_force_shap(t, x.data(), p);
            check_close(fast.phi, slow.phi, 1e-9);
            CHECK(std::fabs(fast.base_value - slow.base_value) <= 1e-10);
            CHECK(fast.additivity_gap() <= 1e-9);
            CHECK(slow.additivity_gap() <= 1e-9);
        }
    }
}

TEST_CASE("guards reject unusable trees and oversized enumerations") {
    learn::RegressionTree t = additive_tree();
    double x[2] = {1.0, 1.0};
    CHECK_THROWS_AS(tree_shap(t, x, 1), DataError);
    CHECK_THROWS_AS(brute_force_shap(t, x, 1), DataError);

    double wide[21] = {0};
    CHECK_THROWS_WITH_AS(brute_force_shap(step_tree(), wide, 21),
                         "brute-force enumeration guarded to p <= 20", DataError);

    learn::RegressionTree broken = additive_tree();
    broken.nodes[3].cover = 0.0;
    CHECK_THROWS_WITH_AS(tree_shap(broken, x, 2),
                         "tree not SHAP-ready: node covers missing", ProtocolError);
    CHECK_THROWS_AS(brute_force_shap(broken, x, 2), ProtocolError);
}

TEST_CASE("forest attributions average the member trees") {
    SplitMix64 gen(7);
    const std::size_t n = 40, p = 4;
    std::vector<std::vector<double>> rows(n, std::vector<double>(p));
    std::vector<double> y(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < p; ++c) rows[r][c] = gen.next_double();
        y[r] = 5.0 * rows[r][0] - 2.0 * rows[r][1] + 0.3 * gen.next_double();
    }
    std::vector<std::string> names = {"a", "b", "c", "d"};
    FeatureMatrix data = make_matrix(names, rows, y);

    learn::ForestParams fp;
    fp.n_estimators = 6;
    fp.tree.max_depth = 4;
    learn::Ensemble forest = learn::fit_forest(data, fp);

    std::vector<double> x = {0.8, 0.2, 0.5, 0.5};
    Attribution fast = ensemble_shap(forest, x.data(), p);
    Attribution slow = brute_force_shap(forest, x.data(), p);
    check_close(fast.phi, slow.phi, 1e-9);
    CHECK(std::fabs(fast.base_value - slow.base_value) <= 1e-10);
    CHECK(fast.prediction == forest.predict(x.data()));
    CHECK(fast.additivity_gap() <= 1e-9);
}

TEST_CASE("boosted attributions scale by the learning rate around the base") {
    SplitMix64 gen(13);
    const std::size_t n = 40, p = 3;
    std::vector<std::vector<double>> rows(n, std::vector<double>(p));
    std::vector<double> y(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < p; ++c) rows[r][c] = gen.next_double();
        y[r] = 4.0 * rows[r][0] + rows[r][1] * rows[r][1];
    }
    FeatureMatrix data = make_matrix({"a", "b", "c"}, rows, y);

    learn::GbtParams gp;
    gp.n_estimators = 8;
    gp.learning_rate = 0.4;
    gp.max_depth = 3;
    learn::Ensemble gbt = learn::fit_gbt(data, gp);

    std::vector<double> x = {0.6, 0.4, 0.9};
    Attribution fast = ensemble_shap(gbt, x.data(), p);
    Attribution slow = brute_force_shap(gbt, x.data(), p);
    check_close(fast.phi, slow.phi, 1e-9);
    CHECK(std::fabs(fast.base_value - slow.base_value) <= 1e-10);
    CHECK(fast.additivity_gap() <= 1e-8);

    learn::Ensemble empty;
    empty.kind = learn::EnsembleKind::boosted_sum;
    CHECK_THROWS_AS(ensemble_shap(empty, x.data(), p), DataError);
    CHECK_THROWS_AS(brute_force_shap(empty, x.data(), p), DataError);
}

TEST_CASE("global importance ranks by mean absolute attribution") {
    SplitMix64 gen(99);
    const std::size_t n = 50;
    std::vector<std::vector<double>> rows(n, std::vector<double>(3));
    std::vector<double> y(n);
    for (std::size_t r = 0; r < n; ++r) {
        rows[r][0] = gen.next_double();
        rows[r][1] = gen.next_double();
        rows[r][2] = 0.5;  // flat, never split on
        y[r] = 10.0 * rows[r][0] + 0.5 * rows[r][1];
    }
    FeatureMatrix data = make_matrix({"signal", "weak", "flat"}, rows, y);
    learn::ForestParams fp;
    fp.n_estimators = 5;
    fp.tree.max_depth = 5;
    fp.feature_subsample_count = 0;
    learn::Ensemble forest = learn::fit_forest(data, fp);

    std::vector<std::size_t> use = {0, 1, 2, 3, 4, 5, 6, 7};
    auto ranked = global_importance(forest, data, use);
    REQUIRE(ranked.size() == 3);
    CHECK(ranked[0].column == "signal");
    CHECK(ranked[0].mean_abs_phi > ranked[1].mean_abs_phi);
    CHECK(ranked[2].column == "flat");
    CHECK(ranked[2].mean_abs_phi == 0.0);

    CHECK_THROWS_AS(global_importance(forest, data, {}), DataError);
}

TEST_CASE("attribution csv carries one phi column per feature") {
    Attribution a;
    a.base_value = 1.5;
    a.phi = {0.5, -0.25};
    a.prediction = 1.75;
    Attribution b;
    b.base_value = 1.5;
    b.phi = {0.0, 2.0};
    b.prediction = 3.5;

    const std::string path = "attr_tmp.csv";
    write_attributions_csv({a, b}, {"alpha", "beta,with comma"}, {"row-1", "row-2"}, path);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "row_id,prediction,base_value,phi_alpha,\"phi_beta,with comma\"");
    std::getline(in, line);
    CHECK(line == "row-1,1.75,1.5,0.5,-0.25");
    std::getline(in, line);
    CHECK(line == "row-2,3.5,1.5,0,2");
    in.close();
    std::remove(path.c_str());

    CHECK_THROWS_AS(write_attributions_csv({a}, {"alpha", "beta"}, {"r1", "r2"}, path),
                    DataError);
    CHECK_THROWS_AS(write_attributions_csv({a}, {"only_one"}, {"r1"}, path), DataError);
    std::remove(path.c_str());
}
