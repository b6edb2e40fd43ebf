#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <string>
#include <vector>

#include "gapaudit/curate.hpp"
#include "gapaudit/errors.hpp"
#include "gapaudit/record.hpp"

using namespace gapaudit;
using namespace gapaudit::curate;

namespace {

// A record that passes every default filter.
RawRecord good(const std::string& id) {
    RawRecord r;
    r.id = id;
    r.formula = "SiO2";
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
    r.values[field::max_efg] = 1.5;
    return r;
}

std::size_t survivors(const std::vector<RawRecord>& recs) {
    auto [curated, funnel] = apply_filters(recs, FilterConfig{});
    return curated.size();
}

}  // namespace

TEST_CASE("funnel stages run in a fixed order and account for every record") {
    std::vector<RawRecord> recs;
    recs.push_back(good("k-1"));

    RawRecord no_field = good("k-2");
    no_field.values.erase(field::poisson);
    recs.push_back(no_field);

    RawRecord pos_fe = good("k-3");
    pos_fe.values[field::formation_energy] = 0.4;
    recs.push_back(pos_fe);

    RawRecord bad_poisson = good("k-4");
    bad_poisson.values[field::poisson] = 0.55;
    recs.push_back(bad_poisson);

    RawRecord heavy = good("k-5");
    heavy.values[field::bulk_modulus] = 400.0;
    recs.push_back(heavy);

    RawRecord shiny = good("k-6");
    shiny.values[field::epsx] = 150.0;
    recs.push_back(shiny);

    RawRecord bad_spg = good("k-7");
    bad_spg.values[field::spg_number] = 231.0;
    recs.push_back(bad_spg);

    RawRecord zero_d = good("k-8");
    zero_d.values[field::dimensionality] = std::string("0D");
    recs.push_back(zero_d);

    RawRecord no_efg = good("k-9");
    no_efg.values.erase(field::max_efg);
    recs.push_back(no_efg);

    auto [curated, funnel] = apply_filters(recs, FilterConfig{});

    REQUIRE(funnel.stages.size() == 8);
    const char* expected[] = {"required_fields", "formation_energy", "poisson_window",
                              "moduli_caps",     "dielectric_window", "space_group",
                              "dimensionality",  "max_efg"};
    for (std::size_t i = 0; i < 8; ++i) CHECK(funnel.stages[i].stage == expected[i]);

    CHECK(funnel.stages[0].records_in == 9);
    CHECK(funnel.stages[0].records_out == 8);  // k-2 drops
    CHECK(funnel.stages[1].records_out == 7);  // k-3 drops
    CHECK(funnel.stages[2].records_out == 6);  // k-4 drops
    CHECK(funnel.stages[3].records_out == 5);  // k-5 drops
    CHECK(funnel.stages[4].records_out == 4);  // k-6 drops
    CHECK(funnel.stages[5].records_out == 3);  // k-7 drops
    CHECK(funnel.stages[6].records_out == 2);  // k-8 drops
    CHECK(funnel.stages[7].records_out == 1);  // k-9 drops
    CHECK(funnel.final_count == 1);

    // Chained counts: records_in of each stage equals records_out of the last.
    for (std::size_t i = 1; i < 8; ++i)
        CHECK(funnel.stages[i].records_in == funnel.stages[i - 1].records_out);

    REQUIRE(curated.size() == 1);
    CHECK(curated[0].base.id == "k-1");
    CHECK(curated[0].is_3d);
    CHECK(curated[0].max_efg == 1.5);
}

TEST_CASE("filter boundaries are inclusive where specified") {
    RawRecord lo = good("b-1");
    lo.values[field::poisson] = 0.1;  // window edge stays in
    RawRecord hi = good("b-2");
    hi.values[field::poisson] = 0.5;
    RawRecord cap = good("b-3");
    cap.values[field::bulk_modulus] = 300.0;  // cap edge stays in
    RawRecord over = good("b-4");
    over.values[field::bulk_modulus] = 300.0001;
    RawRecord zero_fe = good("b-5");
    zero_fe.values[field::formation_energy] = 0.0;  // <= 0 passes
    RawRecord spg_lo = good("b-6");
    spg_lo.values[field::spg_number] = 1.0;
    RawRecord spg_frac = good("b-7");
    spg_frac.values[field::spg_number] = 151.5;

    CHECK(survivors({lo}) == 1);
    CHECK(survivors({hi}) == 1);
    CHECK(survivors({cap}) == 1);
    CHECK(survivors({over}) == 0);
    CHECK(survivors({zero_fe}) == 1);
    CHECK(survivors({spg_lo}) == 1);
    CHECK(survivors({spg_frac}) == 0);
}

TEST_CASE("negative bandgap and negative moduli drop") {
    RawRecord neg_gap = good("n-1");
    neg_gap.values[field::bandgap] = -0.2;
    RawRecord neg_shear = good("n-2");
    neg_shear.values[field::shear_modulus] = -3.0;
    RawRecord zero_eps = good("n-3");
    zero_eps.values[field::epsz] = 0.0;
    CHECK(survivors({neg_gap}) == 0);
    CHECK(survivors({neg_shear}) == 0);
    CHECK(survivors({zero_eps}) == 0);
}

TEST_CASE("dimensionality folding accepts case and whitespace variants") {
    RawRecord lower = good("d-1");
    lower.values[field::dimensionality] = std::string("3d");
    RawRecord spaced = good("d-2");
    spaced.values[field::dimensionality] = std::string(" 2D ");
    CHECK(survivors({lower, spaced}) == 2);

    auto [curated, funnel] = apply_filters({lower, spaced}, FilterConfig{});
    CHECK(curated[0].is_3d);
    CHECK_FALSE(curated[1].is_3d);
}

TEST_CASE("derive_is_3d validates its input") {
    RawRecord r = good("e-1");
    CHECK(derive_is_3d(r));
    r.values[field::dimensionality] = std::string("1D");
    CHECK_THROWS_AS(derive_is_3d(r), DataError);
    r.values.erase(field::dimensionality);
    CHECK_THROWS_AS(derive_is_3d(r), DataError);
}

TEST_CASE("max_efg reconstruction prefers the native value") {
    RawRecord r = good("f-1");
    TensorSites t(1);
    t[0][0][0] = -9.0;
    r.values[field::efg_tensor] = t;
    CHECK(reconstruct_max_efg(r).value() == 1.5);

    r.values.erase(field::max_efg);
    CHECK(reconstruct_max_efg(r).value() == 9.0);  // max |component|

    r.values.erase(field::efg_tensor);
    CHECK_FALSE(reconstruct_max_efg(r).has_value());

    r.values[field::efg_tensor] = std::string("[[bad]]");
    CHECK_THROWS_AS(reconstruct_max_efg(r), DataError);
}

TEST_CASE("corrupt tensor payloads drop at the max_efg stage, not by crash") {
    RawRecord r = good("g-1");
    r.values.erase(field::max_efg);
    r.values[field::efg_tensor] = std::string("[[bad]]");
    auto [curated, funnel] = apply_filters({r}, FilterConfig{});
    CHECK(curated.empty());
    CHECK(funnel.stages.back().records_in == 1);
    CHECK(funnel.stages.back().records_out == 0);
}

TEST_CASE("curated numeric access covers derived fields") {
    auto [curated, funnel] = apply_filters({good("h-1")}, FilterConfig{});
    REQUIRE(curated.size() == 1);
    const CuratedRecord& c = curated[0];
    CHECK(c.numeric(field::is_3d) == 1.0);
    CHECK(c.numeric(field::max_efg) == 1.5);
    CHECK(c.numeric(field::density) == 2.65);
    CHECK_THROWS_AS(c.numeric("unknown_column"), DataError);
}

TEST_CASE("violations re-check a curated record against a config") {
    auto [curated, funnel] = apply_filters({good("v-1")}, FilterConfig{});
    REQUIRE(curated.size() == 1);
    CHECK(violations(curated[0], FilterConfig{}).empty());

    FilterConfig strict;
    strict.poisson_min = 0.3;  // record has 0.2
    auto v = violations(curated[0], strict);
    REQUIRE(v.size() == 1);
    CHECK(v[0] == "poisson outside window");
}

TEST_CASE("filter config validation") {
    FilterConfig bad;
    bad.poisson_min = 0.5;
    bad.poisson_max = 0.1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    FilterConfig neg;
    neg.eps_cap = -1.0;
    CHECK_THROWS_AS(neg.validate(), ConfigError);
    FilterConfig none;
    none.allowed_dimensionalities.clear();
    CHECK_THROWS_AS(none.validate(), ConfigError);
}

TEST_CASE("curated records round-trip through jsonl") {
    RawRecord r = good("r-1");
    r.values.erase(field::max_efg);
    TensorSites t(1);
    t[0][1][2] = 4.25;
    r.values[field::efg_tensor] = t;
    auto [curated, funnel] = apply_filters({r, good("r-2")}, FilterConfig{});
    REQUIRE(curated.size() == 2);

    std::string path = "curate_roundtrip_tmp.jsonl";
    write_curated_jsonl_file(curated, path);
    auto back = read_curated_jsonl_file(path);
    std::remove(path.c_str());

    REQUIRE(back.size() == 2);
    CHECK(back[0].base.id == "r-1");
    CHECK(back[0].is_3d == curated[0].is_3d);
    CHECK(back[0].max_efg == 4.25);
    CHECK(back[1].max_efg == 1.5);
    CHECK(back[0].numeric(field::bandgap) == 5.6);
}

TEST_CASE("curated reader rejects streams without the derived fields") {
    std::string path = "curate_bad_tmp.jsonl";
    {
        FILE* f = std::fopen(path.c_str(), "w");
        std::fputs("{\"id\":\"x\",\"formula\":\"Si\"}\n", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(read_curated_jsonl_file(path), DataError);
    std::remove(path.c_str());
}
