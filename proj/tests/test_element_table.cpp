#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "gapaudit/element_table.hpp"
#include "gapaudit/errors.hpp"

using namespace gapaudit;
using features::ElementTable;

TEST_CASE("embedded table spans H through Pu") {
    const ElementTable& t = ElementTable::embedded();
    CHECK(t.all().size() == 94);
    CHECK(t.all().front().symbol == "H");
    CHECK(t.all().back().symbol == "Pu");
}

TEST_CASE("key rows carry the expected values") {
    const ElementTable& t = ElementTable::embedded();
    const auto& h = t.require("H");
    CHECK(h.chi.value() == doctest::Approx(2.20));
    CHECK(h.radius_pm == 31.0);
    CHECK(h.valence_s == 1.0);
    CHECK(h.valence_p == 0.0);
    const auto& o = t.require("O");
    CHECK(o.chi.value() == doctest::Approx(3.44));
    CHECK(o.radius_pm == 66.0);
    CHECK(o.valence_s == 2.0);
    CHECK(o.valence_p == 4.0);
    const auto& fe = t.require("Fe");
    CHECK(fe.valence_d == 6.0);
    const auto& ga = t.require("Ga");
    CHECK(ga.valence_s == 2.0);
    CHECK(ga.valence_p == 1.0);
    CHECK(ga.valence_d == 10.0);
}

TEST_CASE("noble gases lack electronegativity") {
    const ElementTable& t = ElementTable::embedded();
    CHECK_FALSE(t.require("He").chi.has_value());
    CHECK_FALSE(t.require("Ne").chi.has_value());
    CHECK_FALSE(t.require("Ar").chi.has_value());
    CHECK(t.require("Kr").chi.has_value());
}

TEST_CASE("lookup misses") {
    const ElementTable& t = ElementTable::embedded();
    CHECK(t.find("Zz") == nullptr);
    CHECK_THROWS_WITH_AS(t.require("Zz"), "element 'Zz' not in the property table",
                         DataError);
}

TEST_CASE("property access by column name") {
    const ElementTable& t = ElementTable::embedded();
    const auto& si = t.require("Si");
    CHECK(si.property("chi").value() == doctest::Approx(1.90));
    CHECK(si.property("radius_pm").value() == 111.0);
    CHECK(si.property("ns").value() == 2.0);
    CHECK(si.property("np").value() == 2.0);
    CHECK(si.property("nd").value() == 0.0);
    CHECK(si.property("nf").value() == 0.0);
    CHECK_FALSE(t.require("He").property("chi").has_value());
    CHECK_THROWS_AS(si.property("volume"), ConfigError);
}

TEST_CASE("property name order is fixed") {
    const auto& names = ElementTable::property_names();
    REQUIRE(names.size() == 6);
    CHECK(names[0] == "chi");
    CHECK(names[1] == "radius_pm");
    CHECK(names[2] == "ns");
    CHECK(names[3] == "np");
    CHECK(names[4] == "nd");
    CHECK(names[5] == "nf");
}

TEST_CASE("csv text parsing accepts comments and blank lines") {
    ElementTable t = ElementTable::from_csv_text(
        "# comment\n"
        "\n"
        "symbol,chi,radius_pm,ns,np,nd,nf\n"
        "H,2.20,31,1,0,0,0\n"
        "He,,28,2,0,0,0\n");
    CHECK(t.all().size() == 2);
    CHECK(t.require("H").chi.value() == doctest::Approx(2.20));
    CHECK_FALSE(t.require("He").chi.has_value());
}

TEST_CASE("csv text parsing rejects malformed input") {
    CHECK_THROWS_AS(ElementTable::from_csv_text(""), DataError);
    CHECK_THROWS_AS(ElementTable::from_csv_text("wrong,header,row,a,b,c,d\n"),
                    ParseError);
    CHECK_THROWS_AS(ElementTable::from_csv_text(
                        "symbol,chi,radius_pm,ns,np,nd,nf\nH,2.20,31,1,0\n"),
                    ParseError);
    CHECK_THROWS_AS(ElementTable::from_csv_text(
                        "symbol,chi,radius_pm,ns,np,nd,nf\nH,abc,31,1,0,0,0\n"),
                    ParseError);
    CHECK_THROWS_AS(ElementTable::from_csv_text(
                        "symbol,chi,radius_pm,ns,np,nd,nf\nH,2.20,-5,1,0,0,0\n"),
                    DataError);
    CHECK_THROWS_AS(
        ElementTable::from_csv_text("symbol,chi,radius_pm,ns,np,nd,nf\n"
                                    "H,2.20,31,1,0,0,0\nH,2.20,31,1,0,0,0\n"),
        DataError);
}

TEST_CASE("missing file is a config error") {
    CHECK_THROWS_AS(ElementTable::from_csv_file("/nonexistent/table.csv"), ConfigError);
}
