#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "gapaudit/errors.hpp"
#include "gapaudit/integrity.hpp"
#include "gapaudit/matrix.hpp"

using namespace gapaudit;
using namespace gapaudit::integrity;

namespace {

FeatureMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    std::vector<std::string> names;
    for (std::size_t c = 0; c < rows[0].size(); ++c) names.push_back("c" + std::to_string(c));
    FeatureMatrix m(names, rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) m.at(r, c) = rows[r][c];
        m.target()[r] = 0.0;
        m.row_ids()[r] = "r" + std::to_string(r);
    }
    return m;
}

}  // namespace

TEST_CASE("ks statistic and p-value, continuous samples") {
    std::vector<double> x = {0.62, 1.94, -0.52, 0.88, 2.10, -1.31, 0.05, 1.17, -0.29, 0.73};
    std::vector<double> y = {1.02, 2.44, 0.15, 1.37, 2.63, -0.80,
                             0.58, 1.66, 0.21, 1.22, -0.05, 1.88};
    KsResult r = ks_two_sample(x, y);
    CHECK(r.n1 == 10);
    CHECK(r.n2 == 12);
    CHECK(r.d_statistic == doctest::Approx(0.30000000000000004).epsilon(1e-14));
    CHECK(r.p_value == doctest::Approx(0.6258560942797334).epsilon(1e-12));
}

TEST_CASE("ks handles ties with a dual advance") {
    std::vector<double> x = {1, 1, 1, 2, 3};
    std::vector<double> y = {1, 2, 2, 2, 4};
    KsResult r = ks_two_sample(x, y);
    CHECK(r.d_statistic == doctest::Approx(0.4).epsilon(1e-14));
    CHECK(r.p_value == doctest::Approx(0.6974048780205911).epsilon(1e-12));
}

TEST_CASE("ks on disjoint supports maximizes the statistic") {
    KsResult r = ks_two_sample({0, 1, 2}, {5, 6, 7, 8});
    CHECK(r.d_statistic == 1.0);
    CHECK(r.p_value == doctest::Approx(0.020503981704794297).epsilon(1e-12));
}

TEST_CASE("ks on identical samples is degenerate") {
    std::vector<double> x = {0.3, 1.1, 2.7, -0.4, 0.9};
    KsResult r = ks_two_sample(x, x);
    CHECK(r.d_statistic == 0.0);
    CHECK(r.p_value == 1.0);
}

TEST_CASE("ks is invariant to input permutation and monotone rescaling") {
    std::vector<double> x = {0.62, 1.94, -0.52, 0.88, 2.10, -1.31};
    std::vector<double> y = {1.02, 2.44, 0.15, 1.37, 2.63};
    KsResult base = ks_two_sample(x, y);

    std::vector<double> xs = x, ys = y;
    std::mt19937 gen(3);
    std::shuffle(xs.begin(), xs.end(), gen);
    std::shuffle(ys.begin(), ys.end(), gen);
    KsResult shuffled = ks_two_sample(xs, ys);
    CHECK(shuffled.d_statistic == base.d_statistic);
    CHECK(shuffled.p_value == base.p_value);

    auto scale = [](std::vector<double> v) {
        for (double& e : v) e = 3.0 * e + 10.0;
        return v;
    };
    KsResult scaled = ks_two_sample(scale(x), scale(y));
    CHECK(scaled.d_statistic == doctest::Approx(base.d_statistic).epsilon(1e-14));
    CHECK(scaled.p_value == doctest::Approx(base.p_value).epsilon(1e-12));
}

TEST_CASE("ks p-values stay within [0,1] as separation grows") {
    std::vector<double> x, y;
    for (int i = 0; i < 200; ++i) {
        x.push_back(i * 0.01);
        y.push_back(i * 0.01 + 5.0);
    }
    KsResult r = ks_two_sample(x, y);
    CHECK(r.d_statistic == 1.0);
    CHECK(r.p_value >= 0.0);
    CHECK(r.p_value <= 1e-12);
}

TEST_CASE("ks rejects empty samples") {
    CHECK_THROWS_AS(ks_two_sample({}, {1.0}), DataError);
    CHECK_THROWS_AS(ks_two_sample({1.0}, {}), DataError);
}

TEST_CASE("pca explained variance ratios on a frozen matrix") {
    FeatureMatrix m = from_rows({{1, 2, 0.5},
                                 {2, 4.1, 0.4},
                                 {3, 5.9, 0.9},
                                 {4, 8.2, 0.1},
                                 {5, 9.9, 0.6}});
    PcaResult r = pca_explained_variance(m);
    REQUIRE(r.explained_variance_ratios.size() == 3);
    CHECK(r.explained_variance_ratios[0] == doctest::Approx(0.6699437075362324).epsilon(1e-10));
    CHECK(r.explained_variance_ratios[1] == doctest::Approx(0.3300211177785163).epsilon(1e-10));
    CHECK(r.explained_variance_ratios[2] ==
          doctest::Approx(3.517468525125283e-05).epsilon(1e-6));
    double total = 0;
    for (double v : r.explained_variance_ratios) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.components_for_thresholds.at(0.774) == 2);
    CHECK(r.components_for_thresholds.at(0.95) == 2);
}

TEST_CASE("pca ratios are sorted descending and invariant to column order") {
    FeatureMatrix m = from_rows({{1, 2, 0.5},
                                 {2, 4.1, 0.4},
                                 {3, 5.9, 0.9},
                                 {4, 8.2, 0.1},
                                 {5, 9.9, 0.6}});
    FeatureMatrix swapped = m.select_columns({2, 0, 1});
    PcaResult a = pca_explained_variance(m);
    PcaResult b = pca_explained_variance(swapped);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a.explained_variance_ratios[i] ==
              doctest::Approx(b.explained_variance_ratios[i]).epsilon(1e-10));
        if (i)
            CHECK(a.explained_variance_ratios[i] <= a.explained_variance_ratios[i - 1]);
    }
}

TEST_CASE("pca on perfectly correlated columns is rank one") {
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 6; ++i)
        rows.push_back({double(i), 2.0 * i + 1.0});
    PcaResult r = pca_explained_variance(from_rows(rows));
    REQUIRE(r.explained_variance_ratios.size() == 2);
    CHECK(r.explained_variance_ratios[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.explained_variance_ratios[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.components_for_thresholds.at(0.774) == 1);
    CHECK(r.components_for_thresholds.at(0.95) == 1);
}

TEST_CASE("pca threshold bookkeeping hits exact boundaries") {
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 8; ++i)
        rows.push_back({double(i), 2.0 * i});
    PcaResult r = pca_explained_variance(from_rows(rows), true, {1.0, 0.5});
    CHECK(r.components_for_thresholds.at(0.5) == 1);
    CHECK(r.components_for_thresholds.at(1.0) == 1);  // ratios are exactly {1, 0}
}

TEST_CASE("pca rejects degenerate shapes") {
    FeatureMatrix one_row = from_rows({{1.0, 2.0}});
    CHECK_THROWS_AS(pca_explained_variance(one_row), DataError);
    FeatureMatrix all_constant = from_rows({{1.0, 5.0}, {1.0, 5.0}, {1.0, 5.0}});
    CHECK_THROWS_AS(pca_explained_variance(all_constant, true), DataError);
}

TEST_CASE("pca sidelines constant columns instead of failing") {
    FeatureMatrix m = from_rows({{1.0, 5.0}, {1.0, 6.0}, {1.0, 7.0}});
    PcaResult r = pca_explained_variance(m, true);
    REQUIRE(r.explained_variance_ratios.size() == 2);
    CHECK(r.explained_variance_ratios[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.explained_variance_ratios[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("jacobi eigenvalues match a frozen symmetric case") {
    std::vector<double> a = {4, 1, 0.5, 0.2, 1, 3, 0.8, 0.3,
                             0.5, 0.8, 2, 0.6, 0.2, 0.3, 0.6, 1};
    auto eig = detail::jacobi_eigenvalues(a, 4);
    REQUIRE(eig.size() == 4);
    CHECK(eig[0] == doctest::Approx(4.936643523022435).epsilon(1e-12));
    CHECK(eig[1] == doctest::Approx(2.6363018598465513).epsilon(1e-12));
    CHECK(eig[2] == doctest::Approx(1.7106018367309406).epsilon(1e-12));
    CHECK(eig[3] == doctest::Approx(0.716452780400074).epsilon(1e-12));
}

TEST_CASE("jacobi leaves a diagonal matrix untouched") {
    std::vector<double> a = {3, 0, 0, 0, 7, 0, 0, 0, 1};
    auto eig = detail::jacobi_eigenvalues(a, 3);
    CHECK(eig[0] == doctest::Approx(7.0));
    CHECK(eig[1] == doctest::Approx(3.0));
    CHECK(eig[2] == doctest::Approx(1.0));
}

TEST_CASE("range preservation ratio") {
    std::vector<double> raw = {0, 2, 4, 6, 8, 10};
    std::vector<double> cur = {2, 3, 4, 5};
    RangeEntry e = range_preservation("density", raw, cur);
    CHECK(e.name == "density");
    CHECK(e.raw_min == 0.0);
    CHECK(e.raw_max == 10.0);
    CHECK(e.curated_min == 2.0);
    CHECK(e.curated_max == 5.0);
    CHECK(e.preserved_fraction == doctest::Approx(0.3).epsilon(1e-14));
}

TEST_CASE("range preservation rejects degenerate raw spans") {
    CHECK_THROWS_AS(range_preservation("x", {5, 5, 5}, {5}), DataError);
    CHECK_THROWS_AS(range_preservation("x", {}, {1}), DataError);
    CHECK_THROWS_AS(range_preservation("x", {1, 2}, {}), DataError);
}
