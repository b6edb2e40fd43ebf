#include "gapaudit/features.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gapaudit/errors.hpp"

namespace gapaudit::features {

void FeatureConfig::validate() const {
    if (epsilon_stabilizer <= 0) throw ConfigError("epsilon_stabilizer must be positive");
    if (sp_promotion_clip_max <= 0)
        throw ConfigError("sp_promotion_clip_max must be positive");
    static const std::set<std::string> known_kinds = {"mean", "min", "max", "range",
                                                      "std"};
    if (elemental_stat_kinds.empty())
        throw ConfigError("elemental_stat_kinds must not be empty");
    for (const auto& k : elemental_stat_kinds)
        if (!known_kinds.count(k))
            throw ConfigError("unknown elemental statistic '" + k + "'");
    const auto& props = ElementTable::property_names();
    for (const auto& p : elemental_properties)
        if (std::find(props.begin(), props.end(), p) == props.end())
            throw ConfigError("unknown elemental property '" + p + "'");
}

const std::vector<std::string>& phase1_feature_names() {
    static const std::vector<std::string> names = {
        field::formation_energy, field::ehull, field::bulk_modulus,
        field::shear_modulus,    field::poisson, field::epsx,
        field::epsy,             field::epsz,  field::density,
        field::nat,              field::is_3d, field::max_efg};
    return names;
}

NamedVector phase1_features(const curate::CuratedRecord& record) {
    NamedVector out;
    out.names = phase1_feature_names();
    out.values.reserve(out.names.size());
    for (const auto& name : out.names) out.values.push_back(record.numeric(name));
    return out;
}

const std::vector<std::string>& phase2_feature_names() {
    static const std::vector<std::string> names = {
        "dielectric_mean", "dielectric_anisotropy", "pugh_ratio",
        "v_t_proxy",       "v_l_proxy",             "specific_stiffness",
        "stability_stiffness_ratio"};
    return names;
}

NamedVector phase2_features(const curate::CuratedRecord& record,
                            const FeatureConfig& cfg) {
    const double eps = cfg.epsilon_stabilizer;
    const double ex = record.numeric(field::epsx);
    const double ey = record.numeric(field::epsy);
    const double ez = record.numeric(field::epsz);
    const double k_gpa = record.numeric(field::bulk_modulus);
    const double g_gpa = record.numeric(field::shear_modulus);
    const double ehull = record.numeric(field::ehull);
    const double k_pa = k_gpa * 1e9;
    const double g_pa = g_gpa * 1e9;
    const double rho = record.numeric(field::density) * 1000.0;  // g/cm^3 -> kg/m^3

    const double mean = (ex + ey + ez) / 3.0;
    const double lo = std::min({ex, ey, ez});
    const double hi = std::max({ex, ey, ez});

    NamedVector out;
    out.names = phase2_feature_names();
    out.values = {mean,
                  (hi - lo) / (mean + eps),
                  g_gpa / k_gpa,
                  std::sqrt(g_pa / rho),
                  std::sqrt((k_pa + 4.0 * g_pa / 3.0) / rho),
                  k_pa / rho,
                  ehull / (k_gpa + eps)};
    return out;
}

const std::vector<std::string>& phase3_descriptor_names() {
    static const std::vector<std::string> names = {
        "bond_polarity_index",      "atomic_size_homogeneity",
        "relative_electronegativity_range", "radius_mismatch",
        "atomic_size_uniformity",   "radius_variance",
        "pauling_ionicity_proxy",   "d_hybridization_tendency",
        "pd_orbital_interaction_index", "sp_promotion_index",
        "transition_metal_electron_index"};
    return names;
}

namespace {

struct ElementSample {
    std::string symbol;
    double weight = 0;
    double chi = 0;
    double radius = 0;
    double f_s = 0, f_p = 0, f_d = 0, f_f = 0;
};

std::vector<ElementSample> gather(const Composition& comp, const ElementTable& table) {
    auto weights = comp.weights();
    std::vector<ElementSample> out;
    for (const auto& [sym, w] : weights) {
        const ElementProps& props = table.require(sym);
        ElementSample s;
        s.symbol = sym;
        s.weight = w;
        if (!props.chi)
            throw DataError("element " + sym + " lacks property chi");
        s.chi = *props.chi;
        s.radius = props.radius_pm;
        double total = props.valence_s + props.valence_p + props.valence_d +
                       props.valence_f;
        if (total <= 0)
            throw DataError("element " + sym + " has no valence electrons tabulated");
        s.f_s = props.valence_s / total;
        s.f_p = props.valence_p / total;
        s.f_d = props.valence_d / total;
        s.f_f = props.valence_f / total;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

NamedVector phase3_descriptors(const Composition& comp, const ElementTable& table,
                               const FeatureConfig& cfg) {
    const auto samples = gather(comp, table);
    const double eps = cfg.epsilon_stabilizer;

    // max/min range over distinct elements; mean/std are weighted.
    double chi_min = samples[0].chi, chi_max = samples[0].chi;
    double r_min = samples[0].radius, r_max = samples[0].radius;
    double chi_mean = 0, r_mean = 0;
    double fs = 0, fp = 0, fd = 0;
    double fd_distinct = 0;
    for (const auto& s : samples) {
        chi_min = std::min(chi_min, s.chi);
        chi_max = std::max(chi_max, s.chi);
        r_min = std::min(r_min, s.radius);
        r_max = std::max(r_max, s.radius);
        chi_mean += s.weight * s.chi;
        r_mean += s.weight * s.radius;
        fs += s.weight * s.f_s;
        fp += s.weight * s.f_p;
        fd += s.weight * s.f_d;
        fd_distinct += s.f_d;
    }
    fd_distinct /= static_cast<double>(samples.size());
    double r_var = 0;
    for (const auto& s : samples) r_var += s.weight * (s.radius - r_mean) * (s.radius - r_mean);

    const double dchi = chi_max - chi_min;
    const double mismatch = (r_max - r_min) / r_mean;

    NamedVector out;
    out.names = phase3_descriptor_names();
    out.values = {dchi * dchi,
                  1.0 / (1.0 + mismatch),
                  dchi / chi_mean,
                  mismatch,
                  r_mean / r_max,
                  r_var,
                  1.0 - std::exp(-0.25 * dchi * dchi),
                  fd,
                  fp * fd,
                  std::min(fs / (fp + eps), cfg.sp_promotion_clip_max),
                  fd_distinct};
    return out;
}

NamedVector elemental_stats(const Composition& comp, const std::string& property,
                            const ElementTable& table,
                            const std::vector<std::string>& kinds) {
    auto weights = comp.weights();
    std::vector<double> values;
    std::vector<double> w;
    for (const auto& [sym, weight] : weights) {
        auto v = table.require(sym).property(property);
        if (!v) throw DataError("element " + sym + " lacks property " + property);
        values.push_back(*v);
        w.push_back(weight);
    }
    double mean = 0;
    for (std::size_t i = 0; i < values.size(); ++i) mean += w[i] * values[i];
    double var = 0;
    for (std::size_t i = 0; i < values.size(); ++i)
        var += w[i] * (values[i] - mean) * (values[i] - mean);
    double lo = *std::min_element(values.begin(), values.end());
    double hi = *std::max_element(values.begin(), values.end());

    NamedVector out;
    for (const auto& kind : kinds) {
        out.names.push_back(property + "_" + kind);
        if (kind == "mean") out.values.push_back(mean);
        else if (kind == "min") out.values.push_back(lo);
        else if (kind == "max") out.values.push_back(hi);
        else if (kind == "range") out.values.push_back(hi - lo);
        else if (kind == "std") out.values.push_back(std::sqrt(var));
        else throw ConfigError("unknown elemental statistic '" + kind + "'");
    }
    return out;
}

FeatureMatrix build_matrix(const std::vector<curate::CuratedRecord>& records, Phase phase,
                           const FeatureConfig& cfg, const ElementTable& table) {
    cfg.validate();

    std::vector<std::string> columns = phase1_feature_names();
    if (phase == Phase::II) {
        for (const auto& n : phase2_feature_names()) columns.push_back(n);
    } else if (phase == Phase::III) {
        for (const auto& n : phase3_descriptor_names()) columns.push_back(n);
        for (const auto& prop : cfg.elemental_properties)
            for (const auto& kind : cfg.elemental_stat_kinds)
                columns.push_back(prop + "_" + kind);
    }

    // Phase III needs parseable formulas with full table coverage; collect
    // all offenders before failing.
    std::vector<Composition> comps;
    if (phase == Phase::III) {
        std::string bad;
        std::size_t bad_count = 0;
        comps.reserve(records.size());
        for (const auto& rec : records) {
            try {
                Composition c = parse_formula(rec.base.formula);
                gather(c, table);
                for (const auto& prop : cfg.elemental_properties)
                    elemental_stats(c, prop, table, {"mean"});
                comps.push_back(std::move(c));
            } catch (const std::exception&) {
                ++bad_count;
                if (!bad.empty()) bad += ", ";
                if (bad_count <= 20) bad += rec.base.id;
                comps.emplace_back();
            }
        }
        if (bad_count > 0)
            throw DataError("phase III featurization failed for " +
                            std::to_string(bad_count) + " records: " + bad);
    }

    FeatureMatrix m(columns, records.size());
    m.phase = phase;
    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto& rec = records[r];
        std::size_t c = 0;
        NamedVector p1 = phase1_features(rec);
        for (double v : p1.values) m.at(r, c++) = v;
        if (phase == Phase::II) {
            NamedVector p2 = phase2_features(rec, cfg);
            for (double v : p2.values) m.at(r, c++) = v;
        } else if (phase == Phase::III) {
            NamedVector p3 = phase3_descriptors(comps[r], table, cfg);
            for (double v : p3.values) m.at(r, c++) = v;
            for (const auto& prop : cfg.elemental_properties) {
                NamedVector stats =
                    elemental_stats(comps[r], prop, table, cfg.elemental_stat_kinds);
                for (double v : stats.values) m.at(r, c++) = v;
            }
        }
        m.target()[r] = rec.numeric(field::bandgap);
        m.row_ids()[r] = rec.base.id;
    }
    m.validate();
    return m;
}

}  // namespace gapaudit::features
