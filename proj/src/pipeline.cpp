#include "gapaudit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gapaudit/element_table.hpp"
#include "gapaudit/errors.hpp"
#include "gapaudit/explain.hpp"
#include "gapaudit/integrity.hpp"
#include "gapaudit/rng.hpp"
#include "csv_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gapaudit::pipeline {

namespace {

std::string hex16(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

const std::vector<std::string>& default_presets() {
    static const std::vector<std::string> names = {"ridge", "rf-balanced",
                                                   "xgb-balanced", "cat-balanced"};
    return names;
}

std::vector<learn::ModelConfig> effective_models(const PipelineConfig& cfg) {
    const auto& names = cfg.model_presets.empty() ? default_presets() : cfg.model_presets;
    std::vector<learn::ModelConfig> out;
    for (const auto& name : names) out.push_back(learn::preset(name));
    return out;
}

ingest::Format infer_format(const std::string& path, const std::string& declared) {
    if (!declared.empty()) return ingest::format_from_name(declared);
    const std::string ext = fs::path(path).extension().string();
    if (ext == ".jsonl" || ext == ".json") return ingest::Format::jsonl;
    if (ext == ".csv") return ingest::Format::csv;
    throw ConfigError("cannot infer input format from '" + path +
                      "'; declare it in input_formats");
}

bool debug_logging() {
    const char* lvl = std::getenv("GAPAUDIT_LOG");
    return lvl != nullptr && std::string(lvl) == "debug";
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << text;
    if (!out) throw ConfigError("write failed: " + path);
}

void write_json(const std::string& path, const json& j) {
    write_text(path, j.dump(2) + "\n");
}

// Re-reads a JSON artifact another writer produced and adds the run stamp.
void stamp_json_file(const std::string& path, const std::string& config_hash,
                     std::uint64_t seed) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot reopen artifact: " + path);
    json j = json::parse(in);
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    write_json(path, j);
}

json metrics_json(const learn::Metrics& m) {
    return {{"r2", m.r2},
            {"mae", m.mae},
            {"mse", m.mse},
            {"residual_mean", m.residual_mean},
            {"residual_std", m.residual_std}};
}

}  // namespace

void PipelineConfig::validate() const {
    if (inputs.empty()) throw ConfigError("at least one input is required");
    if (inputs.size() > 2) throw ConfigError("at most two inputs are supported");
    if (!input_formats.empty() && input_formats.size() != inputs.size())
        throw ConfigError("input_formats must match inputs in length");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (!fs::exists(inputs[i]))
            throw ConfigError("input path does not exist: " + inputs[i]);
        infer_format(inputs[i], input_formats.empty() ? "" : input_formats[i]);
    }
    if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
    if (!(train_fraction > 0) || !(train_fraction < 1))
        throw ConfigError("train_fraction must lie in (0, 1)");
    if (shap_rows == 0) throw ConfigError("shap_rows must be >= 1");
    filters.validate();
    features.validate();
    selection.validate();
    audit_thresholds.validate();
    for (const auto& cfg : effective_models(*this)) (void)cfg;
    if (learn::preset(ranking_preset).kind == learn::ModelConfig::Kind::ridge)
        throw ConfigError("ranking_preset must name a tree-based preset");
}

std::string config_json(const PipelineConfig& cfg) {
    json j;
    j["inputs"] = cfg.inputs;
    j["input_formats"] = cfg.input_formats;
    j["out_dir"] = cfg.out_dir;
    j["phase"] = phase_name(cfg.phase);
    j["seed"] = cfg.seed;
    j["train_fraction"] = cfg.train_fraction;
    j["filters"] = {{"poisson_min", cfg.filters.poisson_min},
                    {"poisson_max", cfg.filters.poisson_max},
                    {"bulk_max_gpa", cfg.filters.bulk_max_gpa},
                    {"shear_max_gpa", cfg.filters.shear_max_gpa},
                    {"eps_cap", cfg.filters.eps_cap},
                    {"required_fields", cfg.filters.required_fields},
                    {"allowed_dimensionalities", cfg.filters.allowed_dimensionalities}};
    j["features"] = {{"epsilon_stabilizer", cfg.features.epsilon_stabilizer},
                     {"sp_promotion_clip_max", cfg.features.sp_promotion_clip_max},
                     {"elemental_stat_kinds", cfg.features.elemental_stat_kinds},
                     {"elemental_properties", cfg.features.elemental_properties}};
    j["selection"] = {{"variance_threshold", cfg.selection.variance_threshold},
                      {"correlation_cutoff", cfg.selection.correlation_cutoff},
                      {"sweep_start", cfg.selection.sweep_start},
                      {"sweep_step", cfg.selection.sweep_step}};
    j["audit_thresholds"] = {{"min_delta_r2", cfg.audit_thresholds.min_delta_r2},
                             {"min_mae_reduction", cfg.audit_thresholds.min_mae_reduction}};
    j["model_presets"] = cfg.model_presets;
    j["ranking_preset"] = cfg.ranking_preset;
    j["run_audit"] = cfg.run_audit;
    j["run_shap"] = cfg.run_shap;
    j["shap_rows"] = cfg.shap_rows;
    return j.dump(2) + "\n";
}

namespace {

void read_string_list(const json& v, std::vector<std::string>& out,
                      const std::string& key) {
    if (!v.is_array()) throw ConfigError("config key '" + key + "' must be an array");
    out.clear();
    for (const auto& e : v) out.push_back(e.get<std::string>());
}

void parse_filters(const json& v, curate::FilterConfig& f) {
    for (const auto& [key, value] : v.items()) {
        if (key == "poisson_min") f.poisson_min = value.get<double>();
        else if (key == "poisson_max") f.poisson_max = value.get<double>();
        else if (key == "bulk_max_gpa") f.bulk_max_gpa = value.get<double>();
        else if (key == "shear_max_gpa") f.shear_max_gpa = value.get<double>();
        else if (key == "eps_cap") f.eps_cap = value.get<double>();
        else if (key == "required_fields") read_string_list(value, f.required_fields, key);
        else if (key == "allowed_dimensionalities")
            read_string_list(value, f.allowed_dimensionalities, key);
        else throw ConfigError("unknown filters key: " + key);
    }
}

void parse_features(const json& v, features::FeatureConfig& f) {
    for (const auto& [key, value] : v.items()) {
        if (key == "epsilon_stabilizer") f.epsilon_stabilizer = value.get<double>();
        else if (key == "sp_promotion_clip_max")
            f.sp_promotion_clip_max = value.get<double>();
        else if (key == "elemental_stat_kinds")
            read_string_list(value, f.elemental_stat_kinds, key);
        else if (key == "elemental_properties")
            read_string_list(value, f.elemental_properties, key);
        else throw ConfigError("unknown features key: " + key);
    }
}

void parse_selection(const json& v, select::SelectConfig& s) {
    for (const auto& [key, value] : v.items()) {
        if (key == "variance_threshold") s.variance_threshold = value.get<double>();
        else if (key == "correlation_cutoff") s.correlation_cutoff = value.get<double>();
        else if (key == "sweep_start") s.sweep_start = value.get<std::size_t>();
        else if (key == "sweep_step") s.sweep_step = value.get<std::size_t>();
        else throw ConfigError("unknown selection key: " + key);
    }
}

void parse_thresholds(const json& v, audit::FlagThresholds& t) {
    for (const auto& [key, value] : v.items()) {
        if (key == "min_delta_r2") t.min_delta_r2 = value.get<double>();
        else if (key == "min_mae_reduction") t.min_mae_reduction = value.get<double>();
        else throw ConfigError("unknown audit_thresholds key: " + key);
    }
}

}  // namespace

PipelineConfig parse_config_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    PipelineConfig cfg;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "inputs") read_string_list(value, cfg.inputs, key);
            else if (key == "input_formats") read_string_list(value, cfg.input_formats, key);
            else if (key == "out_dir") cfg.out_dir = value.get<std::string>();
            else if (key == "phase") cfg.phase = phase_from_name(value.get<std::string>());
            else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
            else if (key == "train_fraction") cfg.train_fraction = value.get<double>();
            else if (key == "filters") parse_filters(value, cfg.filters);
            else if (key == "features") parse_features(value, cfg.features);
            else if (key == "selection") parse_selection(value, cfg.selection);
            else if (key == "audit_thresholds") parse_thresholds(value, cfg.audit_thresholds);
            else if (key == "model_presets") read_string_list(value, cfg.model_presets, key);
            else if (key == "ranking_preset") cfg.ranking_preset = value.get<std::string>();
            else if (key == "run_audit") cfg.run_audit = value.get<bool>();
            else if (key == "run_shap") cfg.run_shap = value.get<bool>();
            else if (key == "shap_rows") cfg.shap_rows = value.get<std::size_t>();
            else throw ConfigError("unknown config key: " + key);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config value: ") + e.what());
    }
    return cfg;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_json(buf.str());
}

ResidualHistogram residual_histogram(const std::vector<double>& residuals,
                                     double bin_width) {
    if (residuals.empty()) throw DataError("residual histogram needs residuals");
    if (!(bin_width > 0)) throw ConfigError("bin width must be positive");
    const auto [lo_it, hi_it] = std::minmax_element(residuals.begin(), residuals.end());
    const double lo = *lo_it, hi = *hi_it;
    ResidualHistogram h;
    h.bin_width = bin_width;
    h.first_edge = lo;
    const double span = hi - lo;
    std::size_t n_bins =
        span <= 0 ? 1 : static_cast<std::size_t>(std::ceil(span / bin_width - 1e-12));
    if (n_bins == 0) n_bins = 1;
    h.counts.assign(n_bins, 0);
    for (double r : residuals) {
        auto idx = static_cast<std::size_t>((r - lo) / bin_width);
        if (idx >= n_bins) idx = n_bins - 1;
        ++h.counts[idx];
    }
    return h;
}

FeatureMatrix synth_matrix(const SynthMatrixConfig& cfg) {
    if (cfg.n < 50) throw ConfigError("synthetic matrix needs n >= 50");
    if (cfg.p_clean < 3) throw ConfigError("synthetic matrix needs p_clean >= 3");
    if (!(cfg.leak_noise_frac > 0))
        throw ConfigError("leak_noise_frac must be positive");
    SplitMix64 rng(cfg.seed);
    std::vector<std::string> columns;
    for (std::size_t c = 0; c < cfg.p_clean; ++c)
        columns.push_back("x" + std::to_string(c));
    columns.push_back("leak");
    FeatureMatrix m(columns, cfg.n);
    m.target_name = "target";
    for (std::size_t r = 0; r < cfg.n; ++r)
        for (std::size_t c = 0; c < cfg.p_clean; ++c)
            m.at(r, c) = rng.next_gaussian();
    // Smooth target: linear part, two pairwise interactions, one sinusoid;
    // the interaction and sine terms drop out when p_clean is too small to
    // host them.
    const std::size_t p = cfg.p_clean;
    std::vector<double> y(cfg.n);
    double mean = 0;
    for (std::size_t r = 0; r < cfg.n; ++r) {
        const double* x = m.row(r);
        double v = 1.5 * x[0] + 1.2 * x[1] + 0.8 * x[2];
        if (p > 4) v += 1.2 * x[3] * x[4];
        if (p > 6) v += 0.8 * x[5] * x[6];
        if (p > 7) v += 0.6 * std::sin(2.5 * x[7]);
        y[r] = v;
        mean += v;
    }
    mean /= static_cast<double>(cfg.n);
    double var = 0;
    for (double v : y) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(cfg.n));
    for (std::size_t r = 0; r < cfg.n; ++r)
        m.at(r, p) = y[r] + cfg.leak_noise_frac * sd * rng.next_gaussian();
    m.target() = std::move(y);
    auto& ids = m.row_ids();
    for (std::size_t r = 0; r < cfg.n; ++r) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "synth-%06zu", r);
        ids[r] = buf;
    }
    m.validate();
    return m;
}

std::vector<RawRecord> synth_records(const SynthRecordsConfig& cfg) {
    if (cfg.n < 50) throw ConfigError("synthetic records need n >= 50");
    if (!(cfg.leak_noise_frac > 0))
        throw ConfigError("leak_noise_frac must be positive");
    SplitMix64 rng(cfg.seed);
    static const std::vector<std::pair<std::string, std::string>> systems = {
        {"Si", "O"},  {"Ga", "As"}, {"Zn", "S"},  {"Al", "N"},
        {"Mg", "O"},  {"Ti", "O"},  {"Cu", "Cl"}, {"Na", "Cl"},
        {"In", "P"},  {"Cd", "Te"}, {"B", "N"},   {"Sn", "Se"}};

    std::vector<RawRecord> out(cfg.n);
    std::vector<double> gap(cfg.n);
    double mean = 0;
    for (std::size_t r = 0; r < cfg.n; ++r) {
        RawRecord& rec = out[r];
        char buf[32];
        std::snprintf(buf, sizeof buf, "synth-%06zu", r);
        rec.id = buf;
        const auto& sys = systems[r % systems.size()];
        // Consecutive counts are coprime, so every record keeps a distinct
        // reduced composition and none collapses in deduplication.
        const std::size_t k = r / systems.size() + 1;
        rec.formula = sys.first + std::to_string(k) + sys.second + std::to_string(k + 1);

        const double fe = -(0.2 + 3.0 * rng.next_double());
        const double ehull = 0.2 * rng.next_double();
        const double density = 2.0 + 6.0 * rng.next_double();
        const double nat = static_cast<double>(2 * k + 1);
        const bool is3d = rng.next_double() >= 0.25;
        const double spg = static_cast<double>(1 + rng.bounded(230));
        const double bulk = 20.0 + 250.0 * rng.next_double();
        const double shear = 10.0 + 180.0 * rng.next_double();
        const double poisson = 0.12 + 0.35 * rng.next_double();
        const double epsx = 1.0 + 40.0 * rng.next_double();
        const double epsy = 1.0 + 40.0 * rng.next_double();
        const double epsz = 1.0 + 40.0 * rng.next_double();
        const double max_efg = 10.0 * rng.next_double();

        double g = 1.2 + 0.45 * (-fe) + 2.0 * (poisson - 0.3) +
                   0.6 * std::sin(bulk / 40.0) + 0.4 * std::cos(shear / 30.0) -
                   0.02 * (epsx + epsy + epsz) / 3.0 + 0.15 * (density - 5.0) +
                   (is3d ? 0.0 : 0.35);
        if (g < 0) g = 0;
        gap[r] = g;
        mean += g;

        rec.values[field::formation_energy] = fe;
        rec.values[field::ehull] = ehull;
        rec.values[field::density] = density;
        rec.values[field::nat] = nat;
        rec.values[field::dimensionality] = std::string(is3d ? "3D" : "2D");
        rec.values[field::spg_number] = spg;
        rec.values[field::bulk_modulus] = bulk;
        rec.values[field::shear_modulus] = shear;
        rec.values[field::poisson] = poisson;
        rec.values[field::epsx] = epsx;
        rec.values[field::epsy] = epsy;
        rec.values[field::epsz] = epsz;
        rec.values[field::max_efg] = max_efg;
        rec.values[field::bandgap] = g;
    }
    mean /= static_cast<double>(cfg.n);
    double var = 0;
    for (double g : gap) var += (g - mean) * (g - mean);
    const double sd = std::sqrt(var / static_cast<double>(cfg.n));
    for (std::size_t r = 0; r < cfg.n; ++r) {
        out[r].values[field::avg_elec_mass] =
            gap[r] + cfg.leak_noise_frac * sd * rng.next_gaussian();
        out[r].values[field::avg_hole_mass] =
            gap[r] + cfg.leak_noise_frac * sd * rng.next_gaussian();
    }
    return out;
}

namespace {

struct RunContext {
    const PipelineConfig& cfg;
    std::string hash;
    bool debug = false;
    PipelineResult* result = nullptr;

    std::string path(const std::string& name) const {
        return (fs::path(cfg.out_dir) / name).string();
    }
    void note(const std::string& stage, const std::string& detail) {
        result->stages.push_back({stage, detail});
        if (debug) std::cerr << "[gapaudit] " << stage << ": " << detail << "\n";
    }
    void stamp(json& j) const {
        j["config_hash"] = hash;
        j["seed"] = cfg.seed;
    }
    template <typename Fn>
    void stage(const std::string& name, Fn&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            json marker;
            marker["stage"] = name;
            marker["error"] = e.what();
            stamp(marker);
            try {
                write_json(path("FAILED.json"), marker);
            } catch (...) {
            }
            throw ProtocolError("stage " + name + ": " + e.what());
        }
    }
};

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

}  // namespace

PipelineResult run(const PipelineConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);
    const std::string canonical = config_json(cfg);
    PipelineResult result;
    RunContext ctx{cfg, hex16(fnv1a64(canonical.data(), canonical.size())),
                   debug_logging(), &result};

    // ingest
    std::vector<RawRecord> records;
    ctx.stage("ingest", [&] {
        std::vector<std::vector<RawRecord>> sources;
        for (std::size_t i = 0; i < cfg.inputs.size(); ++i) {
            ingest::Format fmt = infer_format(
                cfg.inputs[i], cfg.input_formats.empty() ? "" : cfg.input_formats[i]);
            sources.push_back(
                ingest::normalize_missing(ingest::parse_records_file(cfg.inputs[i], fmt)));
        }
        std::vector<RawRecord> merged;
        ingest::SourceMergeReport merge_part;
        if (sources.size() == 2) {
            auto [m, rep] = ingest::merge_sources(sources[0], sources[1]);
            merged = std::move(m);
            merge_part = rep;
        } else {
            merged = std::move(sources[0]);
            merge_part.records_in_a = merged.size();
        }
        auto [deduped, dedup_rep] = ingest::dedup_lowest_energy(merged);
        result.merge = merge_part;
        result.merge.merged_total = dedup_rep.merged_total;
        result.merge.dedup_groups = dedup_rep.dedup_groups;
        result.merge.dedup_survivors = dedup_rep.dedup_survivors;
        result.merge.unparseable_formulas = dedup_rep.unparseable_formulas;
        records = std::move(deduped);
        if (records.empty()) throw DataError("no records survived ingestion");

        ingest::write_records_jsonl_file(records, ctx.path("records.jsonl"));
        json j;
        j["records_in_a"] = result.merge.records_in_a;
        j["records_in_b"] = result.merge.records_in_b;
        j["merged_total"] = result.merge.merged_total;
        j["shared_fields"] = result.merge.shared_fields;
        j["dedup_groups"] = result.merge.dedup_groups;
        j["dedup_survivors"] = result.merge.dedup_survivors;
        j["unparseable_formulas"] = result.merge.unparseable_formulas;
        ctx.stamp(j);
        write_json(ctx.path("merge_report.json"), j);
        ctx.note("ingest", std::to_string(records.size()) + " records from " +
                               std::to_string(cfg.inputs.size()) + " source(s), " +
                               std::to_string(result.merge.dedup_groups) +
                               " composition groups");
    });

    // curate
    std::vector<curate::CuratedRecord> curated;
    ctx.stage("curate", [&] {
        auto [kept, funnel] = curate::apply_filters(records, cfg.filters);
        curated = std::move(kept);
        result.funnel = std::move(funnel);
        if (curated.size() < 5)
            throw DataError("only " + std::to_string(curated.size()) +
                            " records survived curation; at least 5 are needed");
        curate::write_curated_jsonl_file(curated, ctx.path("curated.jsonl"));
        json j;
        j["final_count"] = result.funnel.final_count;
        j["stages"] = json::array();
        for (const auto& s : result.funnel.stages)
            j["stages"].push_back({{"stage", s.stage},
                                   {"records_in", s.records_in},
                                   {"records_out", s.records_out},
                                   {"reason", s.reason}});
        ctx.stamp(j);
        write_json(ctx.path("funnel.json"), j);
        ctx.note("curate", std::to_string(curated.size()) + " of " +
                               std::to_string(records.size()) +
                               " records passed the funnel");
    });

    // integrity
    ctx.stage("integrity", [&] {
        std::vector<double> raw_gap, curated_gap;
        for (const auto& r : records)
            if (auto v = r.numeric(field::bandgap)) raw_gap.push_back(*v);
        for (const auto& r : curated) curated_gap.push_back(r.numeric(field::bandgap));
        integrity::KsResult ks = integrity::ks_two_sample(raw_gap, curated_gap);

        FeatureMatrix phase1 =
            features::build_matrix(curated, Phase::I, cfg.features);
        integrity::PcaResult pca = integrity::pca_explained_variance(phase1);

        json j;
        j["ks_bandgap"] = {{"d_statistic", ks.d_statistic},
                           {"p_value", ks.p_value},
                           {"n1", ks.n1},
                           {"n2", ks.n2}};
        json jp;
        jp["explained_variance_ratios"] = pca.explained_variance_ratios;
        jp["components_for_thresholds"] = json::object();
        for (const auto& [threshold, count] : pca.components_for_thresholds)
            jp["components_for_thresholds"][detail::fmt_double(threshold)] = count;
        j["pca_phase1"] = std::move(jp);

        j["ranges"] = json::array();
        for (const auto& name : phase1.column_names()) {
            if (name == field::is_3d || name == field::max_efg) continue;
            std::vector<double> raw_col, curated_col;
            for (const auto& r : records)
                if (auto v = r.numeric(name)) raw_col.push_back(*v);
            for (const auto& r : curated) curated_col.push_back(r.numeric(name));
            if (raw_col.size() < 2 || curated_col.empty()) continue;
            const auto [lo, hi] = std::minmax_element(raw_col.begin(), raw_col.end());
            if (!(*hi > *lo)) continue;
            integrity::RangeEntry e =
                integrity::range_preservation(name, raw_col, curated_col);
            j["ranges"].push_back({{"name", e.name},
                                   {"raw_min", e.raw_min},
                                   {"raw_max", e.raw_max},
                                   {"curated_min", e.curated_min},
                                   {"curated_max", e.curated_max},
                                   {"preserved_fraction", e.preserved_fraction}});
        }
        ctx.stamp(j);
        write_json(ctx.path("integrity.json"), j);
        ctx.note("integrity",
                 "KS d=" + detail::fmt_double(ks.d_statistic) +
                     ", p=" + detail::fmt_double(ks.p_value) + "; " +
                     std::to_string(pca.explained_variance_ratios.size()) +
                     " principal components");
    });

    // features
    std::map<Phase, FeatureMatrix> matrices;
    learn::SplitSpec split;
    ctx.stage("features", [&] {
        for (Phase phase : {Phase::I, Phase::II, Phase::III}) {
            FeatureMatrix m = features::build_matrix(curated, phase, cfg.features);
            const std::string base = "matrix_phase_" + phase_name(phase);
            write_matrix_csv(m, ctx.path(base + ".csv"), ctx.path(base + ".meta.json"));
            stamp_json_file(ctx.path(base + ".meta.json"), ctx.hash, cfg.seed);
            matrices[phase] = std::move(m);
        }
        split = learn::make_split(curated.size(), cfg.train_fraction, cfg.seed);
        const auto& ids = matrices.at(Phase::I).row_ids();
        json j;
        j["n"] = curated.size();
        j["train_fraction"] = cfg.train_fraction;
        j["train_ids"] = json::array();
        for (std::size_t i : split.train_indices) j["train_ids"].push_back(ids[i]);
        j["test_ids"] = json::array();
        for (std::size_t i : split.test_indices) j["test_ids"].push_back(ids[i]);
        ctx.stamp(j);
        write_json(ctx.path("split.json"), j);
        ctx.note("features",
                 "matrices I/II/III with " +
                     std::to_string(matrices.at(Phase::I).cols()) + "/" +
                     std::to_string(matrices.at(Phase::II).cols()) + "/" +
                     std::to_string(matrices.at(Phase::III).cols()) +
                     " columns over " + std::to_string(curated.size()) + " rows");
    });

    // select (primary phase)
    ctx.stage("select", [&] {
        const FeatureMatrix& primary = matrices.at(cfg.phase);
        result.selection = select::run_selection(
            primary, split, learn::preset(cfg.ranking_preset), cfg.selection);
        select::write_selection_report(result.selection, ctx.path("selection.json"));
        stamp_json_file(ctx.path("selection.json"), ctx.hash, cfg.seed);
        result.full_matrix = primary;
        result.matrix = primary.select_columns_by_name(result.selection.selected);
        ctx.note("select", std::to_string(result.selection.columns_in) + " -> " +
                               std::to_string(result.selection.cleaned.size()) +
                               " columns after screens; best subset " +
                               std::to_string(result.selection.sweep.best_size) +
                               " (r2=" +
                               detail::fmt_double(result.selection.sweep.best_r2) + ")");
    });

    // train
    const std::vector<learn::ModelConfig> models = effective_models(cfg);
    std::map<std::string, learn::AnyModel> primary_fitted;
    std::map<std::string, learn::Metrics> primary_metrics;
    ctx.stage("train", [&] {
        for (const auto& m : models) result.model_names.push_back(m.name);
        json phases_json = json::object();
        for (Phase phase : {Phase::I, Phase::II, Phase::III}) {
            const bool is_primary = phase == cfg.phase;
            json block = json::object();
            std::map<std::string, std::pair<std::string, double>> family_best;
            std::map<std::string, learn::Metrics> phase_metrics;
            for (const auto& model_cfg : models) {
                // Tree models read the selected subset on the primary phase;
                // the linear baseline always sees the full feature set.
                const bool use_selected =
                    is_primary && model_cfg.kind != learn::ModelConfig::Kind::ridge;
                const FeatureMatrix& source =
                    use_selected ? result.matrix : matrices.at(phase);
                FeatureMatrix train = source.select_rows(split.train_indices);
                FeatureMatrix test = source.select_rows(split.test_indices);
                learn::AnyModel fitted = learn::fit_model(model_cfg, train);
                learn::Metrics metrics = learn::evaluate(fitted, test);
                phase_metrics[model_cfg.name] = metrics;
                result.metrics[phase_name(phase) + ":" + model_cfg.name] = metrics;
                auto it = family_best.find(model_cfg.family());
                if (it == family_best.end() || metrics.r2 > it->second.second)
                    family_best[model_cfg.family()] = {model_cfg.name, metrics.r2};
                if (is_primary) {
                    primary_fitted.emplace(model_cfg.name, std::move(fitted));
                    primary_metrics[model_cfg.name] = metrics;
                }
            }
            for (const auto& model_cfg : models) {
                json jm = metrics_json(phase_metrics.at(model_cfg.name));
                jm["best_in_family"] =
                    family_best.at(model_cfg.family()).first == model_cfg.name;
                block[model_cfg.name] = std::move(jm);
            }
            phases_json[phase_name(phase)] = std::move(block);
        }
        json j;
        j["phases"] = std::move(phases_json);
        j["primary_phase"] = phase_name(cfg.phase);
        ctx.stamp(j);
        write_json(ctx.path("metrics.json"), j);

        // Parity and residual diagnostics for each family's best primary-phase
        // configuration.
        std::vector<std::string> families;
        for (const auto& m : models)
            if (std::find(families.begin(), families.end(), m.family()) == families.end())
                families.push_back(m.family());
        json residuals_json = json::object();
        for (const auto& family : families) {
            std::string best_name;
            double best_r2 = 0;
            for (const auto& m : models) {
                if (m.family() != family) continue;
                const double r2 = primary_metrics.at(m.name).r2;
                if (best_name.empty() || r2 > best_r2) {
                    best_name = m.name;
                    best_r2 = r2;
                }
            }
            const learn::ModelConfig* best_cfg = nullptr;
            for (const auto& m : models)
                if (m.name == best_name) best_cfg = &m;
            const bool use_selected =
                best_cfg->kind != learn::ModelConfig::Kind::ridge;
            const FeatureMatrix& source = use_selected ? result.matrix : result.full_matrix;
            FeatureMatrix test = source.select_rows(split.test_indices);
            const learn::AnyModel& fitted = primary_fitted.at(best_name);
            std::ofstream parity(ctx.path("parity_" + family + ".csv"));
            if (!parity)
                throw ConfigError("cannot open for writing: parity_" + family + ".csv");
            parity << "row_id,y_true,y_pred\n";
            std::vector<double> residuals;
            for (std::size_t r = 0; r < test.rows(); ++r) {
                const double pred = learn::predict_any(fitted, test.row(r));
                parity << detail::csv_escape(test.row_ids()[r]) << ','
                       << detail::fmt_double(test.target()[r]) << ','
                       << detail::fmt_double(pred) << '\n';
                residuals.push_back(pred - test.target()[r]);
            }
            if (!parity) throw ConfigError("parity write failed: " + family);
            const learn::Metrics fm = primary_metrics.at(best_name);
            ResidualHistogram hist = residual_histogram(residuals);
            residuals_json[family] = {
                {"model", best_name},
                {"mean", fm.residual_mean},
                {"std", fm.residual_std},
                {"histogram",
                 {{"bin_width", hist.bin_width},
                  {"first_edge", hist.first_edge},
                  {"counts", hist.counts}}}};
        }
        json jr;
        jr["families"] = std::move(residuals_json);
        ctx.stamp(jr);
        write_json(ctx.path("residuals.json"), jr);
        ctx.note("train", std::to_string(models.size()) +
                              " presets evaluated across phases I/II/III");
    });

    // shap
    if (cfg.run_shap) {
        ctx.stage("shap", [&] {
            std::string best_name;
            double best_r2 = 0;
            for (const auto& m : models) {
                if (m.kind == learn::ModelConfig::Kind::ridge) continue;
                const double r2 = primary_metrics.at(m.name).r2;
                if (best_name.empty() || r2 > best_r2) {
                    best_name = m.name;
                    best_r2 = r2;
                }
            }
            if (best_name.empty())
                throw ConfigError("attribution needs at least one tree preset");
            const auto& ens = std::get<learn::Ensemble>(primary_fitted.at(best_name));
            const FeatureMatrix& source = result.matrix;
            std::vector<std::size_t> rows(
                split.test_indices.begin(),
                split.test_indices.begin() +
                    static_cast<long>(std::min(cfg.shap_rows, split.test_indices.size())));

            std::vector<explain::Attribution> attributions;
            std::vector<std::string> ids;
            double max_gap = 0;
            for (std::size_t r : rows) {
                explain::Attribution a =
                    explain::ensemble_shap(ens, source.row(r), source.cols());
                max_gap = std::max(max_gap, a.additivity_gap());
                attributions.push_back(std::move(a));
                ids.push_back(source.row_ids()[r]);
            }
            explain::write_attributions_csv(attributions, source.column_names(), ids,
                                            ctx.path("attributions.csv"));
            std::vector<explain::GlobalImportance> global =
                explain::global_importance(ens, source, rows);
            json j;
            j["model"] = best_name;
            j["phase"] = phase_name(cfg.phase);
            j["rows_attributed"] = rows.size();
            j["max_additivity_gap"] = max_gap;
            j["global_importance"] = json::array();
            for (const auto& g : global)
                j["global_importance"].push_back(
                    {{"column", g.column}, {"mean_abs_phi", g.mean_abs_phi}});
            ctx.stamp(j);
            write_json(ctx.path("shap_global.json"), j);
            ctx.note("shap", std::to_string(rows.size()) +
                                 " test rows attributed with " + best_name);
        });
    }

    // audit
    if (cfg.run_audit) {
        ctx.stage("audit", [&] {
            const audit::RiskRegistry registry = audit::RiskRegistry::builtin();
            std::vector<curate::CuratedRecord> subset;
            for (const auto& r : curated)
                if (r.base.has(field::avg_elec_mass) && r.base.has(field::avg_hole_mass))
                    subset.push_back(r);
            if (subset.size() < 5) {
                json j;
                j["skipped"] = true;
                j["reason"] = "diagnostic subset has " + std::to_string(subset.size()) +
                              " records with complete effective masses; at least 5 "
                              "are needed";
                ctx.stamp(j);
                write_json(ctx.path("audit.json"), j);
                ctx.note("audit", j["reason"].get<std::string>());
                return;
            }
            FeatureMatrix diag = features::build_matrix(subset, Phase::I, cfg.features);
            for (const char* name : {field::avg_elec_mass, field::avg_hole_mass}) {
                std::vector<double> col;
                for (const auto& r : subset) col.push_back(*r.base.numeric(name));
                diag.append_column(name, col);
            }
            learn::SplitSpec diag_split =
                learn::make_split(subset.size(), cfg.train_fraction, cfg.seed);
            audit::AuditReport report = audit::run_audit(diag, diag_split, models,
                                                         registry, cfg.audit_thresholds);
            audit::write_audit_report(report, ctx.path("audit.json"));
            stamp_json_file(ctx.path("audit.json"), ctx.hash, cfg.seed);
            ctx.note("audit",
                     report.flagged_columns.empty()
                         ? std::string("no columns flagged")
                         : "flagged: " + join(report.flagged_columns, ", "));
            result.audit = std::move(report);
        });
    }

    result.manifest_path = ctx.path("manifest.json");
    write_manifest(cfg, result, result.manifest_path);
    return result;
}

void write_manifest(const PipelineConfig& cfg, const PipelineResult& result,
                    const std::string& path) {
    const std::string canonical = config_json(cfg);
    json j;
    j["config"] = json::parse(canonical);
    j["config_hash"] = hex16(fnv1a64(canonical.data(), canonical.size()));
    j["seed"] = cfg.seed;
    std::vector<std::string> artifacts = {"records.jsonl",
                                          "merge_report.json",
                                          "curated.jsonl",
                                          "funnel.json",
                                          "integrity.json",
                                          "matrix_phase_I.csv",
                                          "matrix_phase_I.meta.json",
                                          "matrix_phase_II.csv",
                                          "matrix_phase_II.meta.json",
                                          "matrix_phase_III.csv",
                                          "matrix_phase_III.meta.json",
                                          "split.json",
                                          "selection.json",
                                          "metrics.json",
                                          "residuals.json"};
    std::vector<std::string> families;
    for (const auto& name : result.model_names) {
        const std::string family = name.substr(0, name.find('-'));
        if (std::find(families.begin(), families.end(), family) == families.end())
            families.push_back(family);
    }
    for (const auto& family : families)
        artifacts.push_back("parity_" + family + ".csv");
    if (cfg.run_shap) {
        artifacts.push_back("shap_global.json");
        artifacts.push_back("attributions.csv");
    }
    if (cfg.run_audit) artifacts.push_back("audit.json");
    artifacts.push_back("manifest.json");
    j["artifacts"] = artifacts;
    j["stages"] = json::array();
    for (const auto& s : result.stages)
        j["stages"].push_back({{"stage", s.stage}, {"detail", s.detail}});
    write_json(path, j);
}

}  // namespace gapaudit::pipeline
