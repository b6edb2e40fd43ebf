#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gapaudit/audit.hpp"
#include "gapaudit/curate.hpp"
#include "gapaudit/errors.hpp"
#include "gapaudit/explain.hpp"
#include "gapaudit/features.hpp"
#include "gapaudit/ingest.hpp"
#include "gapaudit/integrity.hpp"
#include "gapaudit/learn.hpp"
#include "gapaudit/matrix.hpp"
#include "gapaudit/pipeline.hpp"
#include "gapaudit/select.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
namespace ga = gapaudit;

namespace {

ga::ingest::Format infer_format(const std::string& path, const std::string& declared) {
    if (!declared.empty()) return ga::ingest::format_from_name(declared);
    const std::string ext = fs::path(path).extension().string();
    if (ext == ".jsonl" || ext == ".json") return ga::ingest::Format::jsonl;
    if (ext == ".csv") return ga::ingest::Format::csv;
    throw ga::ConfigError("cannot infer input format from '" + path +
                          "'; pass --format");
}

std::string default_meta(const std::string& csv_path) {
    if (csv_path.size() > 4 && csv_path.substr(csv_path.size() - 4) == ".csv") {
        std::string meta = csv_path.substr(0, csv_path.size() - 4) + ".meta.json";
        if (fs::exists(meta)) return meta;
    }
    return "";
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw ga::ConfigError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw ga::ConfigError("write failed: " + path);
}

json metrics_json(const ga::learn::Metrics& m) {
    return {{"r2", m.r2},
            {"mae", m.mae},
            {"mse", m.mse},
            {"residual_mean", m.residual_mean},
            {"residual_std", m.residual_std}};
}

std::vector<ga::RawRecord> load_raw(const std::string& path, const std::string& format) {
    return ga::ingest::normalize_missing(
        ga::ingest::parse_records_file(path, infer_format(path, format)));
}

std::vector<ga::learn::ModelConfig> presets_or_default(
    const std::vector<std::string>& names) {
    static const std::vector<std::string> fallback = {"ridge", "rf-balanced",
                                                      "xgb-balanced", "cat-balanced"};
    std::vector<ga::learn::ModelConfig> out;
    for (const auto& n : names.empty() ? fallback : names)
        out.push_back(ga::learn::preset(n));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gapaudit: leakage-aware bandgap dataset curation, modeling and audit"};
    app.require_subcommand(1);

    // ingest
    struct {
        std::vector<std::string> inputs, formats;
        std::string out, report;
    } ing;
    auto* c_ingest = app.add_subcommand(
        "ingest", "Parse, normalize, merge and deduplicate raw record sources");
    c_ingest->add_option("--input", ing.inputs, "Source file (repeat for a second source)")
        ->required()
        ->expected(1, 2)
        ->check(CLI::ExistingFile);
    c_ingest->add_option("--format", ing.formats, "jsonl or csv, per input")
        ->expected(0, 2);
    c_ingest->add_option("--out", ing.out, "Merged records JSONL")->required();
    c_ingest->add_option("--report", ing.report, "Merge report JSON");
    c_ingest->callback([&] {
        if (!ing.formats.empty() && ing.formats.size() != ing.inputs.size())
            throw ga::ConfigError("--format must be given once per --input");
        std::vector<std::vector<ga::RawRecord>> sources;
        for (std::size_t i = 0; i < ing.inputs.size(); ++i)
            sources.push_back(load_raw(
                ing.inputs[i], ing.formats.empty() ? "" : ing.formats[i]));
        ga::ingest::SourceMergeReport report;
        std::vector<ga::RawRecord> merged;
        if (sources.size() == 2) {
            auto [m, rep] = ga::ingest::merge_sources(sources[0], sources[1]);
            merged = std::move(m);
            report = rep;
        } else {
            merged = std::move(sources[0]);
            report.records_in_a = merged.size();
        }
        auto [deduped, dedup_rep] = ga::ingest::dedup_lowest_energy(merged);
        report.merged_total = dedup_rep.merged_total;
        report.dedup_groups = dedup_rep.dedup_groups;
        report.dedup_survivors = dedup_rep.dedup_survivors;
        report.unparseable_formulas = dedup_rep.unparseable_formulas;
        ga::ingest::write_records_jsonl_file(deduped, ing.out);
        if (!ing.report.empty()) {
            json j = {{"records_in_a", report.records_in_a},
                      {"records_in_b", report.records_in_b},
                      {"merged_total", report.merged_total},
                      {"shared_fields", report.shared_fields},
                      {"dedup_groups", report.dedup_groups},
                      {"dedup_survivors", report.dedup_survivors},
                      {"unparseable_formulas", report.unparseable_formulas}};
            write_json_file(ing.report, j);
        }
        std::cout << deduped.size() << " records -> " << ing.out << "\n";
    });

    // curate
    struct {
        std::string input, out, funnel, config;
    } cur;
    auto* c_curate =
        app.add_subcommand("curate", "Apply the completeness and physics filters");
    c_curate->add_option("--input", cur.input, "Records JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    c_curate->add_option("--out", cur.out, "Curated records JSONL")->required();
    c_curate->add_option("--funnel", cur.funnel, "Funnel report JSON");
    c_curate->add_option("--config", cur.config, "Pipeline config JSON (filters section)")
        ->check(CLI::ExistingFile);
    c_curate->callback([&] {
        ga::curate::FilterConfig filters;
        if (!cur.config.empty())
            filters = ga::pipeline::load_config(cur.config).filters;
        auto records = load_raw(cur.input, "jsonl");
        auto [curated, funnel] = ga::curate::apply_filters(records, filters);
        ga::curate::write_curated_jsonl_file(curated, cur.out);
        if (!cur.funnel.empty()) {
            json j;
            j["final_count"] = funnel.final_count;
            j["stages"] = json::array();
            for (const auto& s : funnel.stages)
                j["stages"].push_back({{"stage", s.stage},
                                       {"records_in", s.records_in},
                                       {"records_out", s.records_out},
                                       {"reason", s.reason}});
            write_json_file(cur.funnel, j);
        }
        std::cout << curated.size() << " of " << records.size()
                  << " records passed -> " << cur.out << "\n";
    });

    // integrity
    struct {
        std::string raw, curated, out, config;
    } intg;
    auto* c_integrity = app.add_subcommand(
        "integrity", "Distribution and structure checks of curated vs raw data");
    c_integrity->add_option("--raw", intg.raw, "Raw records JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    c_integrity->add_option("--curated", intg.curated, "Curated records JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    c_integrity->add_option("--out", intg.out, "Integrity report JSON")->required();
    c_integrity->add_option("--config", intg.config, "Pipeline config JSON")
        ->check(CLI::ExistingFile);
    c_integrity->callback([&] {
        ga::features::FeatureConfig fcfg;
        if (!intg.config.empty())
            fcfg = ga::pipeline::load_config(intg.config).features;
        auto raw = load_raw(intg.raw, "jsonl");
        auto curated = ga::curate::read_curated_jsonl_file(intg.curated);
        std::vector<double> raw_gap, curated_gap;
        for (const auto& r : raw)
            if (auto v = r.numeric(ga::field::bandgap)) raw_gap.push_back(*v);
        for (const auto& r : curated)
            curated_gap.push_back(r.numeric(ga::field::bandgap));
        ga::integrity::KsResult ks = ga::integrity::ks_two_sample(raw_gap, curated_gap);
        ga::FeatureMatrix phase1 =
            ga::features::build_matrix(curated, ga::Phase::I, fcfg);
        ga::integrity::PcaResult pca = ga::integrity::pca_explained_variance(phase1);
        json j;
        j["ks_bandgap"] = {{"d_statistic", ks.d_statistic},
                           {"p_value", ks.p_value},
                           {"n1", ks.n1},
                           {"n2", ks.n2}};
        j["pca_phase1"] = {
            {"explained_variance_ratios", pca.explained_variance_ratios}};
        for (const auto& [threshold, count] : pca.components_for_thresholds)
            j["pca_phase1"]["components_for_thresholds"]
             [std::to_string(threshold)] = count;
        j["ranges"] = json::array();
        for (const auto& name : phase1.column_names()) {
            if (name == ga::field::is_3d || name == ga::field::max_efg) continue;
            std::vector<double> raw_col, curated_col;
            for (const auto& r : raw)
                if (auto v = r.numeric(name)) raw_col.push_back(*v);
            for (const auto& r : curated) curated_col.push_back(r.numeric(name));
            if (raw_col.size() < 2 || curated_col.empty()) continue;
            const auto [lo, hi] = std::minmax_element(raw_col.begin(), raw_col.end());
            if (!(*hi > *lo)) continue;
            ga::integrity::RangeEntry e =
                ga::integrity::range_preservation(name, raw_col, curated_col);
            j["ranges"].push_back({{"name", e.name},
                                   {"raw_min", e.raw_min},
                                   {"raw_max", e.raw_max},
                                   {"curated_min", e.curated_min},
                                   {"curated_max", e.curated_max},
                                   {"preserved_fraction", e.preserved_fraction}});
        }
        write_json_file(intg.out, j);
        std::cout << "integrity report -> " << intg.out << "\n";
    });

    // features
    struct {
        std::string curated, phase = "III", out, meta, config;
    } feat;
    auto* c_features =
        app.add_subcommand("features", "Build a per-phase feature matrix");
    c_features->add_option("--curated", feat.curated, "Curated records JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    c_features->add_option("--phase", feat.phase, "I, II or III (default III)");
    c_features->add_option("--out", feat.out, "Matrix CSV")->required();
    c_features->add_option("--meta", feat.meta, "Metadata sidecar JSON");
    c_features->add_option("--config", feat.config, "Pipeline config JSON")
        ->check(CLI::ExistingFile);
    c_features->callback([&] {
        ga::features::FeatureConfig fcfg;
        if (!feat.config.empty())
            fcfg = ga::pipeline::load_config(feat.config).features;
        auto curated = ga::curate::read_curated_jsonl_file(feat.curated);
        ga::FeatureMatrix m = ga::features::build_matrix(
            curated, ga::phase_from_name(feat.phase), fcfg);
        std::string meta = feat.meta;
        if (meta.empty() && feat.out.size() > 4 &&
            feat.out.substr(feat.out.size() - 4) == ".csv")
            meta = feat.out.substr(0, feat.out.size() - 4) + ".meta.json";
        ga::write_matrix_csv(m, feat.out, meta);
        std::cout << m.rows() << "x" << m.cols() << " matrix -> " << feat.out << "\n";
    });

    // select
    struct {
        std::string matrix, meta, out, ranking = "rf-balanced", config;
        std::uint64_t seed = 42;
        double fraction = 0.8;
    } sel;
    auto* c_select = app.add_subcommand(
        "select", "Variance/correlation screens, gain ranking and subset sweep");
    c_select->add_option("--matrix", sel.matrix, "Feature matrix CSV")
        ->required()
        ->check(CLI::ExistingFile);
    c_select->add_option("--meta", sel.meta, "Matrix metadata JSON");
    c_select->add_option("--out", sel.out, "Selection report JSON")->required();
    c_select->add_option("--ranking", sel.ranking, "Tree preset for the gain ranking");
    c_select->add_option("--seed", sel.seed, "Split seed (default 42)");
    c_select->add_option("--train-fraction", sel.fraction, "Train fraction (default 0.8)");
    c_select->add_option("--config", sel.config, "Pipeline config JSON")
        ->check(CLI::ExistingFile);
    c_select->callback([&] {
        ga::select::SelectConfig scfg;
        if (!sel.config.empty())
            scfg = ga::pipeline::load_config(sel.config).selection;
        ga::FeatureMatrix m = ga::read_matrix_csv(
            sel.matrix, sel.meta.empty() ? default_meta(sel.matrix) : sel.meta);
        ga::learn::SplitSpec split =
            ga::learn::make_split(m.rows(), sel.fraction, sel.seed);
        ga::select::SelectionReport report = ga::select::run_selection(
            m, split, ga::learn::preset(sel.ranking), scfg);
        ga::select::write_selection_report(report, sel.out);
        std::cout << "best subset " << report.sweep.best_size << " of "
                  << report.columns_in << " columns -> " << sel.out << "\n";
    });

    // train
    struct {
        std::string matrix, meta, preset = "xgb-balanced", out, metrics;
        std::uint64_t seed = 42;
        double fraction = 0.8;
    } trn;
    auto* c_train =
        app.add_subcommand("train", "Fit one preset on the split and save the model");
    c_train->add_option("--matrix", trn.matrix, "Feature matrix CSV")
        ->required()
        ->check(CLI::ExistingFile);
    c_train->add_option("--meta", trn.meta, "Matrix metadata JSON");
    c_train->add_option("--preset", trn.preset, "Model preset name");
    c_train->add_option("--out", trn.out, "Model JSON")->required();
    c_train->add_option("--metrics", trn.metrics, "Test metrics JSON");
    c_train->add_option("--seed", trn.seed, "Split seed (default 42)");
    c_train->add_option("--train-fraction", trn.fraction, "Train fraction (default 0.8)");
    c_train->callback([&] {
        ga::FeatureMatrix m = ga::read_matrix_csv(
            trn.matrix, trn.meta.empty() ? default_meta(trn.matrix) : trn.meta);
        ga::learn::SplitSpec split =
            ga::learn::make_split(m.rows(), trn.fraction, trn.seed);
        ga::FeatureMatrix train = m.select_rows(split.train_indices);
        ga::FeatureMatrix test = m.select_rows(split.test_indices);
        ga::learn::ModelConfig cfg = ga::learn::preset(trn.preset);
        ga::learn::AnyModel fitted = ga::learn::fit_model(cfg, train);
        ga::learn::Metrics metrics = ga::learn::evaluate(fitted, test);
        ga::learn::save_model(fitted, trn.out);
        if (!trn.metrics.empty()) {
            json j = {{"preset", trn.preset},
                      {"metrics", metrics_json(metrics)},
                      {"n_train", train.rows()},
                      {"n_test", test.rows()},
                      {"seed", trn.seed},
                      {"train_fraction", trn.fraction}};
            write_json_file(trn.metrics, j);
        }
        std::cout << trn.preset << ": r2=" << metrics.r2 << " mae=" << metrics.mae
                  << " -> " << trn.out << "\n";
    });

    // shap
    struct {
        std::string model, matrix, meta, out, global;
        std::size_t rows = 25;
    } shp;
    auto* c_shap = app.add_subcommand(
        "shap", "Exact per-prediction attributions for a saved tree ensemble");
    c_shap->add_option("--model", shp.model, "Model JSON")
        ->required()
        ->check(CLI::ExistingFile);
    c_shap->add_option("--matrix", shp.matrix, "Feature matrix CSV")
        ->required()
        ->check(CLI::ExistingFile);
    c_shap->add_option("--meta", shp.meta, "Matrix metadata JSON");
    c_shap->add_option("--out", shp.out, "Attribution CSV")->required();
    c_shap->add_option("--global", shp.global, "Global importance JSON");
    c_shap->add_option("--rows", shp.rows, "Rows to attribute (default 25)");
    c_shap->callback([&] {
        ga::FeatureMatrix m = ga::read_matrix_csv(
            shp.matrix, shp.meta.empty() ? default_meta(shp.matrix) : shp.meta);
        ga::learn::AnyModel any = ga::learn::load_model(shp.model);
        const auto* ens = std::get_if<ga::learn::Ensemble>(&any);
        if (ens == nullptr)
            throw ga::ConfigError("attribution requires a tree ensemble model");
        const std::size_t count = std::min(shp.rows, m.rows());
        if (count == 0) throw ga::DataError("matrix has no rows to attribute");
        std::vector<ga::explain::Attribution> attributions;
        std::vector<std::string> ids;
        std::vector<std::size_t> indices;
        for (std::size_t r = 0; r < count; ++r) {
            attributions.push_back(
                ga::explain::ensemble_shap(*ens, m.row(r), m.cols()));
            ids.push_back(m.row_ids()[r]);
            indices.push_back(r);
        }
        ga::explain::write_attributions_csv(attributions, m.column_names(), ids,
                                            shp.out);
        if (!shp.global.empty()) {
            auto global = ga::explain::global_importance(*ens, m, indices);
            json j;
            j["rows_attributed"] = count;
            j["global_importance"] = json::array();
            for (const auto& g : global)
                j["global_importance"].push_back(
                    {{"column", g.column}, {"mean_abs_phi", g.mean_abs_phi}});
            write_json_file(shp.global, j);
        }
        std::cout << count << " rows attributed -> " << shp.out << "\n";
    });

    // audit
    struct {
        std::string matrix, meta, out, config;
        std::vector<std::string> presets, mark_high;
        std::uint64_t seed = 42;
        double fraction = 0.8;
    } aud;
    auto* c_audit = app.add_subcommand(
        "audit", "Incremental feature-impact leakage audit against the risk registry");
    c_audit->add_option("--matrix", aud.matrix, "Feature matrix CSV")
        ->required()
        ->check(CLI::ExistingFile);
    c_audit->add_option("--meta", aud.meta, "Matrix metadata JSON");
    c_audit->add_option("--out", aud.out, "Audit report JSON")->required();
    c_audit->add_option("--preset", aud.presets,
                        "Model preset (repeatable; default ridge + balanced trees)");
    c_audit->add_option("--mark-high", aud.mark_high,
                        "Extra column to treat as high risk (repeatable)");
    c_audit->add_option("--seed", aud.seed, "Split seed (default 42)");
    c_audit->add_option("--train-fraction", aud.fraction, "Train fraction (default 0.8)");
    c_audit->add_option("--config", aud.config, "Pipeline config JSON (thresholds)")
        ->check(CLI::ExistingFile);
    c_audit->callback([&] {
        ga::audit::FlagThresholds thresholds;
        if (!aud.config.empty())
            thresholds = ga::pipeline::load_config(aud.config).audit_thresholds;
        ga::FeatureMatrix m = ga::read_matrix_csv(
            aud.matrix, aud.meta.empty() ? default_meta(aud.matrix) : aud.meta);
        ga::audit::RiskRegistry registry = ga::audit::RiskRegistry::builtin();
        for (const auto& col : aud.mark_high)
            registry.set(col, ga::audit::Risk::high, "operator-designated");
        ga::learn::SplitSpec split =
            ga::learn::make_split(m.rows(), aud.fraction, aud.seed);
        ga::audit::AuditReport report = ga::audit::run_audit(
            m, split, presets_or_default(aud.presets), registry, thresholds);
        ga::audit::write_audit_report(report, aud.out);
        if (report.flagged_columns.empty())
            std::cout << "no columns flagged -> " << aud.out << "\n";
        else {
            std::cout << "flagged:";
            for (const auto& c : report.flagged_columns) std::cout << ' ' << c;
            std::cout << " -> " << aud.out << "\n";
        }
    });

    // pipeline
    struct {
        std::string config, out, phase;
        std::uint64_t seed = 0;
    } pip;
    auto* c_pipeline =
        app.add_subcommand("pipeline", "Run every stage end to end from a config file");
    c_pipeline->add_option("--config", pip.config, "Pipeline config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    auto* out_opt =
        c_pipeline->add_option("--out", pip.out, "Output directory (overrides config)");
    auto* seed_opt =
        c_pipeline->add_option("--seed", pip.seed, "Split seed (overrides config)");
    auto* phase_opt = c_pipeline->add_option(
        "--phase", pip.phase, "Primary phase I/II/III (overrides config)");
    c_pipeline->callback([&] {
        ga::pipeline::PipelineConfig cfg = ga::pipeline::load_config(pip.config);
        if (out_opt->count() > 0) cfg.out_dir = pip.out;
        if (seed_opt->count() > 0) cfg.seed = pip.seed;
        if (phase_opt->count() > 0) cfg.phase = ga::phase_from_name(pip.phase);
        ga::pipeline::PipelineResult result = ga::pipeline::run(cfg);
        for (const auto& s : result.stages)
            std::cout << s.stage << ": " << s.detail << "\n";
        std::cout << "manifest -> " << result.manifest_path << "\n";
    });

    // synth
    struct {
        std::string kind = "records", out;
        std::size_t n = 400, p_clean = 10;
        double leak = 0.05;
        std::uint64_t seed = 7;
    } syn;
    auto* c_synth = app.add_subcommand(
        "synth", "Generate a synthetic fixture with a planted leak column");
    c_synth->add_option("--kind", syn.kind, "records (JSONL) or matrix (CSV)");
    c_synth->add_option("--n", syn.n, "Rows to generate (default 400)");
    c_synth->add_option("--p-clean", syn.p_clean,
                        "Clean feature count, matrix kind only (default 10)");
    c_synth->add_option("--leak", syn.leak, "Leak noise fraction (default 0.05)");
    c_synth->add_option("--seed", syn.seed, "Generator seed (default 7)");
    c_synth->add_option("--out", syn.out, "Output path")->required();
    c_synth->callback([&] {
        if (syn.kind == "records") {
            ga::pipeline::SynthRecordsConfig cfg;
            cfg.n = syn.n;
            cfg.leak_noise_frac = syn.leak;
            cfg.seed = syn.seed;
            ga::ingest::write_records_jsonl_file(ga::pipeline::synth_records(cfg),
                                                 syn.out);
        } else if (syn.kind == "matrix") {
            ga::pipeline::SynthMatrixConfig cfg;
            cfg.n = syn.n;
            cfg.p_clean = syn.p_clean;
            cfg.leak_noise_frac = syn.leak;
            cfg.seed = syn.seed;
            std::string meta;
            if (syn.out.size() > 4 && syn.out.substr(syn.out.size() - 4) == ".csv")
                meta = syn.out.substr(0, syn.out.size() - 4) + ".meta.json";
            ga::write_matrix_csv(ga::pipeline::synth_matrix(cfg), syn.out, meta);
        } else {
            throw ga::ConfigError("--kind must be records or matrix");
        }
        std::cout << syn.n << " synthetic rows -> " << syn.out << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ga::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
