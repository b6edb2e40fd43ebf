#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "gapaudit/curate.hpp"
#include "gapaudit/element_table.hpp"
#include "gapaudit/errors.hpp"
#include "gapaudit/features.hpp"
#include "gapaudit/formula.hpp"
#include "gapaudit/matrix.hpp"

using namespace gapaudit;
using namespace gapaudit::features;
using curate::CuratedRecord;

namespace {

RawRecord raw(const std::string& id, const std::string& formula) {
    RawRecord r;
    r.id = id;
    r.formula = formula;
    r.values[field::formation_energy] = -1.0;
    r.values[field::ehull] = 0.01;
    r.values[field::density] = 2.65;
    r.values[field::nat] = 3.0;
    r.values[field::dimensionality] = std::string("3D");
    r.values[field::spg_number] = 152.0;
    r.values[field::bulk_modulus] = 35.0;
    r.values[field::shear_modulus] = 30.0;
    r.values[field::poisson] = 0.2;
    r.values[field::epsx] = 2.4;
    r.values[field::epsy] = 2.4;
    r.values[field::epsz] = 2.5;
    r.values[field::bandgap] = 5.6;
    return r;
}

CuratedRecord curated(const std::string& id, const std::string& formula) {
    CuratedRecord c;
    c.base = raw(id, formula);
    c.is_3d = true;
    c.max_efg = 1.5;
    return c;
}

double get(const NamedVector& v, const std::string& name) {
    for (std::size_t i = 0; i < v.names.size(); ++i)
        if (v.names[i] == name) return v.values[i];
    FAIL("no feature named ", name);
    return 0;
}

}  // namespace

TEST_CASE("phase1 names, order and values") {
    const auto& names = phase1_feature_names();
    REQUIRE(names.size() == 12);
    CHECK(names[0] == field::formation_energy);
    CHECK(names[1] == field::ehull);
    CHECK(names[2] == field::bulk_modulus);
    CHECK(names[3] == field::shear_modulus);
    CHECK(names[4] == field::poisson);
    CHECK(names[5] == field::epsx);
    CHECK(names[6] == field::epsy);
    CHECK(names[7] == field::epsz);
    CHECK(names[8] == field::density);
    CHECK(names[9] == field::nat);
    CHECK(names[10] == field::is_3d);
    CHECK(names[11] == field::max_efg);

    NamedVector v = phase1_features(curated("p1", "SiO2"));
    CHECK(v.names == names);
    CHECK(get(v, field::formation_energy) == -1.0);
    CHECK(get(v, field::is_3d) == 1.0);
    CHECK(get(v, field::max_efg) == 1.5);
    CHECK(get(v, field::density) == 2.65);
}

TEST_CASE("phase2 engineered values on a frozen record") {
    CuratedRecord c = curated("p2", "SiO2");
    c.base.values[field::bulk_modulus] = 47.0;
    c.base.values[field::shear_modulus] = 21.5;
    c.base.values[field::density] = 3.21;
    c.base.values[field::epsx] = 12.0;
    c.base.values[field::epsy] = 14.5;
    c.base.values[field::epsz] = 9.5;
    c.base.values[field::ehull] = 0.031;

    NamedVector v = phase2_features(c, FeatureConfig{});
    REQUIRE(v.names.size() == 7);
    CHECK(get(v, "dielectric_mean") == doctest::Approx(12.0).epsilon(1e-12));
    CHECK(get(v, "dielectric_anisotropy") ==
          doctest::Approx(0.4166666666666667).epsilon(1e-10));
    CHECK(get(v, "pugh_ratio") == doctest::Approx(0.4574468085106383).epsilon(1e-12));
    CHECK(get(v, "v_t_proxy") == doctest::Approx(2588.014550701318).epsilon(1e-12));
    CHECK(get(v, "v_l_proxy") == doctest::Approx(4855.117949251312).epsilon(1e-12));
    CHECK(get(v, "specific_stiffness") ==
          doctest::Approx(14641744.548286604).epsilon(1e-12));
    CHECK(get(v, "stability_stiffness_ratio") ==
          doctest::Approx(0.0006595744680850923).epsilon(1e-10));
}

TEST_CASE("isotropic dielectric tensor has zero anisotropy") {
    CuratedRecord c = curated("p2i", "SiO2");
    c.base.values[field::epsx] = 2.0;
    c.base.values[field::epsy] = 2.0;
    c.base.values[field::epsz] = 2.0;
    NamedVector v = phase2_features(c, FeatureConfig{});
    CHECK(get(v, "dielectric_mean") == doctest::Approx(2.0));
    CHECK(get(v, "dielectric_anisotropy") == doctest::Approx(0.0));
}

TEST_CASE("pugh ratio is the plain modulus quotient") {
    CuratedRecord c = curated("p2p", "SiO2");
    c.base.values[field::shear_modulus] = 40.0;
    c.base.values[field::bulk_modulus] = 80.0;
    NamedVector v = phase2_features(c, FeatureConfig{});
    CHECK(get(v, "pugh_ratio") == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("sound velocity proxy from hand unit conversion") {
    // G = 50 GPa over rho = 5 g/cm^3: sqrt(50e9 / 5000).
    CuratedRecord c = curated("p2v", "SiO2");
    c.base.values[field::shear_modulus] = 50.0;
    c.base.values[field::density] = 5.0;
    NamedVector v = phase2_features(c, FeatureConfig{});
    CHECK(get(v, "v_t_proxy") == doctest::Approx(3162.2776601683795).epsilon(1e-12));
}

TEST_CASE("phase3 descriptors for H2O against hand-computed values") {
    Composition comp = parse_formula("H2O");
    NamedVector v = phase3_descriptors(comp, ElementTable::embedded(), FeatureConfig{});
    REQUIRE(v.names.size() == 11);
    CHECK(v.names == phase3_descriptor_names());

    CHECK(get(v, "bond_polarity_index") ==
          doctest::Approx(1.5375999999999994).epsilon(1e-12));
    CHECK(get(v, "atomic_size_homogeneity") ==
          doctest::Approx(0.5493562231759657).epsilon(1e-12));
    CHECK(get(v, "relative_electronegativity_range") ==
          doctest::Approx(0.47448979591836726).epsilon(1e-12));
    CHECK(get(v, "radius_mismatch") == doctest::Approx(0.8203125).epsilon(1e-12));
    CHECK(get(v, "atomic_size_uniformity") ==
          doctest::Approx(0.6464646464646464).epsilon(1e-12));
    CHECK(get(v, "radius_variance") ==
          doctest::Approx(272.22222222222223).epsilon(1e-12));
    CHECK(get(v, "pauling_ionicity_proxy") ==
          doctest::Approx(0.31914097090807514).epsilon(1e-12));
    CHECK(get(v, "d_hybridization_tendency") == 0.0);
    CHECK(get(v, "pd_orbital_interaction_index") == 0.0);
    CHECK(get(v, "sp_promotion_index") ==
          doctest::Approx(3.4999999999842495).epsilon(1e-10));
    CHECK(get(v, "transition_metal_electron_index") == 0.0);
}

TEST_CASE("phase3 descriptors for GaAs spot values") {
    Composition comp = parse_formula("GaAs");
    NamedVector v = phase3_descriptors(comp, ElementTable::embedded(), FeatureConfig{});
    CHECK(get(v, "bond_polarity_index") ==
          doctest::Approx(0.13690000000000008).epsilon(1e-12));
    CHECK(get(v, "pauling_ionicity_proxy") ==
          doctest::Approx(0.033645949486530435).epsilon(1e-12));
    CHECK(get(v, "d_hybridization_tendency") ==
          doctest::Approx(0.717948717948718).epsilon(1e-12));
    CHECK(get(v, "transition_metal_electron_index") ==
          doctest::Approx(0.717948717948718).epsilon(1e-12));
    CHECK(get(v, "atomic_size_uniformity") ==
          doctest::Approx(0.9877049180327869).epsilon(1e-12));
}

TEST_CASE("single-element compositions collapse to the degenerate values") {
    Composition comp = parse_formula("Si");
    NamedVector v = phase3_descriptors(comp, ElementTable::embedded(), FeatureConfig{});
    CHECK(get(v, "bond_polarity_index") == 0.0);
    CHECK(get(v, "atomic_size_homogeneity") == 1.0);
    CHECK(get(v, "relative_electronegativity_range") == 0.0);
    CHECK(get(v, "radius_mismatch") == 0.0);
    CHECK(get(v, "atomic_size_uniformity") == 1.0);
    CHECK(get(v, "radius_variance") == 0.0);
    CHECK(get(v, "pauling_ionicity_proxy") == 0.0);
    CHECK(get(v, "d_hybridization_tendency") == 0.0);
    CHECK(get(v, "pd_orbital_interaction_index") == 0.0);
    // Si valence is 2s + 2p: the ratio sits at 1 up to the stabilizer.
    CHECK(get(v, "sp_promotion_index") == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(get(v, "transition_metal_electron_index") == 0.0);
}

TEST_CASE("sp promotion clips for p-free elements") {
    // Fe valence: 2s, 6d. The s/p ratio diverges and must clip.
    Composition comp = parse_formula("Fe");
    FeatureConfig cfg;
    NamedVector v = phase3_descriptors(comp, ElementTable::embedded(), cfg);
    CHECK(get(v, "sp_promotion_index") == cfg.sp_promotion_clip_max);
    CHECK(get(v, "d_hybridization_tendency") == doctest::Approx(0.75).epsilon(1e-14));

    FeatureConfig tight;
    tight.sp_promotion_clip_max = 2.5;
    NamedVector w = phase3_descriptors(comp, ElementTable::embedded(), tight);
    CHECK(get(w, "sp_promotion_index") == 2.5);
}

TEST_CASE("phase3 rejects elements without electronegativity") {
    Composition comp = parse_formula("HeO");
    CHECK_THROWS_WITH_AS(
        phase3_descriptors(comp, ElementTable::embedded(), FeatureConfig{}),
        "element He lacks property chi", DataError);
}

TEST_CASE("elemental stats for H2O, weighted about the composition") {
    Composition comp = parse_formula("H2O");
    NamedVector chi = elemental_stats(comp, "chi", ElementTable::embedded(),
                                      {"mean", "min", "max", "range", "std"});
    REQUIRE(chi.names.size() == 5);
    CHECK(chi.names[0] == "chi_mean");
    CHECK(chi.names[4] == "chi_std");
    CHECK(chi.values[0] == doctest::Approx(2.6133333333333333).epsilon(1e-12));
    CHECK(chi.values[1] == doctest::Approx(2.2).epsilon(1e-14));
    CHECK(chi.values[2] == doctest::Approx(3.44).epsilon(1e-14));
    CHECK(chi.values[3] == doctest::Approx(1.2399999999999998).epsilon(1e-12));
    CHECK(chi.values[4] == doctest::Approx(0.5845416057808792).epsilon(1e-12));

    NamedVector rad = elemental_stats(comp, "radius_pm", ElementTable::embedded(),
                                      {"mean", "std"});
    CHECK(rad.values[0] == doctest::Approx(42.666666666666664).epsilon(1e-12));
    CHECK(rad.values[1] == doctest::Approx(16.49915822768611).epsilon(1e-12));
}

TEST_CASE("elemental stats equal-weight two-element case") {
    Composition comp = parse_formula("NaCl");
    NamedVector rad = elemental_stats(comp, "radius_pm", ElementTable::embedded(),
                                      {"mean", "range"});
    CHECK(rad.values[0] == doctest::Approx(134.0).epsilon(1e-14));  // (166+102)/2
    CHECK(rad.values[1] == doctest::Approx(64.0).epsilon(1e-14));
}

TEST_CASE("elemental stats single-element degeneracy") {
    Composition comp = parse_formula("Si4");
    NamedVector v = elemental_stats(comp, "chi", ElementTable::embedded(),
                                    {"mean", "min", "max", "range", "std"});
    CHECK(v.values[0] == doctest::Approx(1.90));
    CHECK(v.values[1] == v.values[0]);
    CHECK(v.values[2] == v.values[0]);
    CHECK(v.values[3] == 0.0);
    CHECK(v.values[4] == 0.0);
}

TEST_CASE("elemental stats follow the requested kind order") {
    Composition comp = parse_formula("H2O");
    NamedVector v =
        elemental_stats(comp, "ns", ElementTable::embedded(), {"std", "mean"});
    REQUIRE(v.names.size() == 2);
    CHECK(v.names[0] == "ns_std");
    CHECK(v.names[1] == "ns_mean");
}

TEST_CASE("elemental stats surface missing properties") {
    Composition comp = parse_formula("HeO");
    CHECK_THROWS_WITH_AS(
        elemental_stats(comp, "chi", ElementTable::embedded(), {"mean"}),
        "element He lacks property chi", DataError);
}

TEST_CASE("feature config validation") {
    FeatureConfig bad_eps;
    bad_eps.epsilon_stabilizer = 0;
    CHECK_THROWS_AS(bad_eps.validate(), ConfigError);

    FeatureConfig bad_kind;
    bad_kind.elemental_stat_kinds = {"median"};
    CHECK_THROWS_AS(bad_kind.validate(), ConfigError);

    FeatureConfig bad_prop;
    bad_prop.elemental_properties = {"volume"};
    CHECK_THROWS_AS(bad_prop.validate(), ConfigError);

    FeatureConfig ok;
    CHECK_NOTHROW(ok.validate());
}

TEST_CASE("build_matrix shapes per phase") {
    std::vector<CuratedRecord> recs = {curated("m-1", "SiO2"), curated("m-2", "GaAs"),
                                       curated("m-3", "NaCl")};
    FeatureConfig cfg;

    FeatureMatrix m1 = features::build_matrix(recs, Phase::I, cfg);
    CHECK(m1.rows() == 3);
    CHECK(m1.cols() == 12);
    CHECK(m1.phase == Phase::I);
    CHECK(m1.target_name == field::bandgap);
    CHECK(m1.row_ids()[1] == "m-2");
    CHECK(m1.target()[0] == 5.6);

    FeatureMatrix m2 = features::build_matrix(recs, Phase::II, cfg);
    CHECK(m2.cols() == 19);
    CHECK(m2.column_names()[12] == "dielectric_mean");

    FeatureMatrix m3 = features::build_matrix(recs, Phase::III, cfg);
    CHECK(m3.cols() == 12 + 11 + 6 * 5);
    CHECK(m3.column_names()[12] == "bond_polarity_index");
    CHECK(m3.column_names()[23] == "chi_mean");
    CHECK(m3.column_names().back() == "nf_std");

    // Phase III embeds the same phase1 block up front.
    for (std::size_t c = 0; c < 12; ++c)
        CHECK(m3.at(0, c) == m1.at(0, c));

    int uniformity = m3.column_index("atomic_size_uniformity");
    REQUIRE(uniformity >= 0);
    int gaas = 1;
    CHECK(m3.at(gaas, static_cast<std::size_t>(uniformity)) ==
          doctest::Approx(0.9877049180327869).epsilon(1e-12));
}

TEST_CASE("build_matrix honors trimmed stat configs") {
    std::vector<CuratedRecord> recs = {curated("m-1", "SiO2")};
    FeatureConfig cfg;
    cfg.elemental_stat_kinds = {"mean"};
    cfg.elemental_properties = {"chi", "radius_pm"};
    FeatureMatrix m = features::build_matrix(recs, Phase::III, cfg);
    CHECK(m.cols() == 12 + 11 + 2);
    CHECK(m.column_names()[23] == "chi_mean");
    CHECK(m.column_names()[24] == "radius_pm_mean");
}

TEST_CASE("build_matrix reports every failing record id") {
    std::vector<CuratedRecord> recs = {curated("ok-1", "SiO2"),
                                       curated("bad-1", "Xx2"),
                                       curated("bad-2", "HeO")};
    try {
        features::build_matrix(recs, Phase::III, FeatureConfig{});
        FAIL("expected DataError");
    } catch (const DataError& e) {
        std::string msg = e.what();
        CHECK(msg.find("2 records") != std::string::npos);
        CHECK(msg.find("bad-1") != std::string::npos);
        CHECK(msg.find("bad-2") != std::string::npos);
        CHECK(msg.find("ok-1") == std::string::npos);
    }
    // Phase I ignores formulas entirely.
    CHECK_NOTHROW(features::build_matrix(recs, Phase::I, FeatureConfig{}));
}
