#include "gapaudit/curate.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>

#include "gapaudit/errors.hpp"
#include "gapaudit/ingest.hpp"

namespace gapaudit {

std::vector<std::string> core_required_fields() {
    return {field::formation_energy, field::ehull,        field::density,
            field::nat,              field::dimensionality, field::spg_number,
            field::bulk_modulus,     field::shear_modulus,  field::poisson,
            field::epsx,             field::epsy,           field::epsz,
            field::bandgap};
}

}  // namespace gapaudit

namespace gapaudit::curate {

namespace {

std::string fold(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) continue;
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

bool field_is_textual(const std::string& name) { return name == field::dimensionality; }

}  // namespace

void FilterConfig::validate() const {
    if (!(poisson_min < poisson_max))
        throw ConfigError("poisson_min must be below poisson_max");
    if (bulk_max_gpa <= 0 || shear_max_gpa <= 0 || eps_cap <= 0)
        throw ConfigError("filter caps must be positive");
    if (allowed_dimensionalities.empty())
        throw ConfigError("allowed_dimensionalities must not be empty");
}

double CuratedRecord::numeric(const std::string& name) const {
    if (name == field::is_3d) return is_3d ? 1.0 : 0.0;
    if (name == field::max_efg) return max_efg;
    auto v = base.numeric(name);
    if (!v) throw DataError("record " + base.id + ": no numeric value for " + name);
    return *v;
}

std::optional<double> reconstruct_max_efg(const RawRecord& record) {
    if (auto native = record.numeric(field::max_efg)) return native;
    auto it = record.values.find(field::efg_tensor);
    if (it == record.values.end() || is_missing(it->second)) return std::nullopt;
    const TensorSites* sites = std::get_if<TensorSites>(&it->second);
    if (!sites)
        throw DataError("record " + record.id + ": efg_tensor has non-numeric entries");
    double best = 0;
    for (const auto& site : *sites)
        for (const auto& row : site)
            for (double v : row) best = std::max(best, std::fabs(v));
    return best;
}

bool derive_is_3d(const RawRecord& record) {
    auto dim = record.text(field::dimensionality);
    if (!dim) throw DataError("record " + record.id + ": dimensionality absent");
    std::string folded = fold(*dim);
    if (folded != "2d" && folded != "3d")
        throw DataError("record " + record.id + ": dimensionality '" + *dim +
                        "' outside {2D, 3D}");
    return folded == "3d";
}

std::pair<std::vector<CuratedRecord>, CurationFunnel> apply_filters(
    const std::vector<RawRecord>& records, const FilterConfig& cfg) {
    cfg.validate();

    struct Stage {
        const char* name;
        const char* reason;
        std::function<bool(const RawRecord&)> pass;
    };

    std::vector<std::string> allowed_folded;
    for (const auto& d : cfg.allowed_dimensionalities) allowed_folded.push_back(fold(d));

    auto num = [](const RawRecord& r, const char* f) { return r.numeric(f); };

    std::vector<Stage> stages;
    stages.push_back({"required_fields", "incomplete core descriptors or negative target",
                      [&cfg](const RawRecord& r) {
                          for (const auto& f : cfg.required_fields) {
                              if (!r.has(f)) return false;
                              if (field_is_textual(f)) {
                                  if (!r.text(f)) return false;
                              } else if (!r.numeric(f)) {
                                  return false;
                              }
                          }
                          if (auto gap = r.numeric(field::bandgap); gap && *gap < 0)
                              return false;
                          return true;
                      }});
    stages.push_back({"formation_energy", "formation_energy_per_atom <= 0",
                      [&](const RawRecord& r) {
                          auto e = num(r, field::formation_energy);
                          return !e || *e <= 0;
                      }});
    stages.push_back({"poisson_window", "poisson within the configured window",
                      [&](const RawRecord& r) {
                          auto p = num(r, field::poisson);
                          return !p || (*p >= cfg.poisson_min && *p <= cfg.poisson_max);
                      }});
    stages.push_back({"moduli_caps", "moduli positive and below caps",
                      [&](const RawRecord& r) {
                          auto k = num(r, field::bulk_modulus);
                          auto g = num(r, field::shear_modulus);
                          if (k && (*k <= 0 || *k > cfg.bulk_max_gpa)) return false;
                          if (g && (*g <= 0 || *g > cfg.shear_max_gpa)) return false;
                          return true;
                      }});
    stages.push_back({"dielectric_window", "dielectric components in (0, eps_cap]",
                      [&](const RawRecord& r) {
                          for (const char* f : {field::epsx, field::epsy, field::epsz}) {
                              auto e = num(r, f);
                              if (e && (*e <= 0 || *e > cfg.eps_cap)) return false;
                          }
                          return true;
                      }});
    stages.push_back({"space_group", "integer space group in [1, 230]",
                      [&](const RawRecord& r) {
                          auto s = num(r, field::spg_number);
                          if (!s) return true;
                          double rounded = std::round(*s);
                          if (std::fabs(*s - rounded) > 1e-9) return false;
                          return rounded >= 1 && rounded <= 230;
                      }});
    stages.push_back({"dimensionality", "dimensionality in the allowed set",
                      [&](const RawRecord& r) {
                          auto d = r.text(field::dimensionality);
                          if (!d) return false;
                          std::string folded = fold(*d);
                          return std::find(allowed_folded.begin(), allowed_folded.end(),
                                           folded) != allowed_folded.end();
                      }});
    stages.push_back({"max_efg", "max_efg present or reconstructable",
                      [](const RawRecord& r) {
                          try {
                              return reconstruct_max_efg(r).has_value();
                          } catch (const DataError&) {
                              // Corrupt tensor payloads drop here; the funnel
                              // records the exclusion.
                              return false;
                          }
                      }});

    CurationFunnel funnel;
    std::vector<RawRecord> alive = records;
    for (const auto& stage : stages) {
        std::vector<RawRecord> next;
        next.reserve(alive.size());
        for (const auto& rec : alive)
            if (stage.pass(rec)) next.push_back(rec);
        funnel.stages.push_back(
            {stage.name, alive.size(), next.size(), stage.reason});
        alive = std::move(next);
    }
    funnel.final_count = alive.size();

    std::vector<CuratedRecord> curated;
    curated.reserve(alive.size());
    for (auto& rec : alive) {
        CuratedRecord c;
        c.is_3d = derive_is_3d(rec);
        c.max_efg = *reconstruct_max_efg(rec);
        c.base = std::move(rec);
        curated.push_back(std::move(c));
    }
    return {std::move(curated), std::move(funnel)};
}

std::vector<std::string> violations(const CuratedRecord& record, const FilterConfig& cfg) {
    std::vector<std::string> out;
    const RawRecord& r = record.base;
    for (const auto& f : cfg.required_fields) {
        if (!r.has(f)) {
            out.push_back("missing " + f);
        } else if (!field_is_textual(f) && !r.numeric(f)) {
            out.push_back("non-numeric " + f);
        }
    }
    if (auto gap = r.numeric(field::bandgap); gap && *gap < 0)
        out.push_back("negative bandgap");
    if (auto e = r.numeric(field::formation_energy); e && *e > 0)
        out.push_back("positive formation energy");
    if (auto p = r.numeric(field::poisson);
        p && (*p < cfg.poisson_min || *p > cfg.poisson_max))
        out.push_back("poisson outside window");
    if (auto k = r.numeric(field::bulk_modulus); k && (*k <= 0 || *k > cfg.bulk_max_gpa))
        out.push_back("bulk modulus outside (0, cap]");
    if (auto g = r.numeric(field::shear_modulus);
        g && (*g <= 0 || *g > cfg.shear_max_gpa))
        out.push_back("shear modulus outside (0, cap]");
    for (const char* f : {field::epsx, field::epsy, field::epsz})
        if (auto e = r.numeric(f); e && (*e <= 0 || *e > cfg.eps_cap))
            out.push_back(std::string(f) + " outside (0, eps_cap]");
    if (auto s = r.numeric(field::spg_number)) {
        double rounded = std::round(*s);
        if (std::fabs(*s - rounded) > 1e-9 || rounded < 1 || rounded > 230)
            out.push_back("invalid space group");
    }
    if (auto d = r.text(field::dimensionality)) {
        std::string folded = fold(*d);
        bool ok = false;
        for (const auto& a : cfg.allowed_dimensionalities)
            if (fold(a) == folded) ok = true;
        if (!ok) out.push_back("dimensionality not allowed");
    } else {
        out.push_back("missing dimensionality");
    }
    return out;
}

void write_curated_jsonl_file(const std::vector<CuratedRecord>& records,
                              const std::string& path) {
    std::vector<RawRecord> enriched;
    enriched.reserve(records.size());
    for (const auto& rec : records) {
        RawRecord r = rec.base;
        r.values[field::is_3d] = rec.is_3d ? 1.0 : 0.0;
        r.values[field::max_efg] = rec.max_efg;
        enriched.push_back(std::move(r));
    }
    ingest::write_records_jsonl_file(enriched, path);
}

std::vector<CuratedRecord> read_curated_jsonl_file(const std::string& path) {
    auto raw = ingest::parse_records_file(path, ingest::Format::jsonl);
    std::vector<CuratedRecord> out;
    out.reserve(raw.size());
    for (auto& r : raw) {
        CuratedRecord c;
        auto flag = r.numeric(field::is_3d);
        auto efg = r.numeric(field::max_efg);
        if (!flag || !efg)
            throw DataError("record " + r.id + ": curated stream lacks is_3D/max_efg");
        c.is_3d = *flag != 0.0;
        c.max_efg = *efg;
        c.base = std::move(r);
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace gapaudit::curate
