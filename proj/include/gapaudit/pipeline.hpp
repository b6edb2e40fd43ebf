#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gapaudit/audit.hpp"
#include "gapaudit/curate.hpp"
#include "gapaudit/features.hpp"
#include "gapaudit/ingest.hpp"
#include "gapaudit/learn.hpp"
#include "gapaudit/matrix.hpp"
#include "gapaudit/select.hpp"

namespace gapaudit::pipeline {

struct PipelineConfig {
    std::vector<std::string> inputs;          // one or two source files
    std::vector<std::string> input_formats;   // "jsonl"/"csv", inferred when empty
    std::string out_dir = "out";
    Phase phase = Phase::III;
    std::uint64_t seed = 42;
    double train_fraction = 0.8;
    curate::FilterConfig filters;
    features::FeatureConfig features;
    select::SelectConfig selection;
    audit::FlagThresholds audit_thresholds;
    std::vector<std::string> model_presets;   // defaults to one per family
    std::string ranking_preset = "rf-balanced";
    bool run_audit = true;
    bool run_shap = true;
    std::size_t shap_rows = 25;               // test rows attributed

    void validate() const;
};

PipelineConfig load_config(const std::string& path);   // JSON file
PipelineConfig parse_config_json(const std::string& text);
std::string config_json(const PipelineConfig& cfg);    // canonical re-serialization

struct StageSummary {
    std::string stage;
    std::string detail;
};

struct PipelineResult {
    ingest::SourceMergeReport merge;
    curate::CurationFunnel funnel;
    FeatureMatrix matrix;                      // post-selection for tree models
    FeatureMatrix full_matrix;                 // pre-selection (ridge trains here)
    select::SelectionReport selection;
    std::vector<std::string> model_names;
    std::map<std::string, learn::Metrics> metrics;   // per model on the test rows
    std::optional<audit::AuditReport> audit;
    std::vector<StageSummary> stages;
    std::string manifest_path;
};

// End-to-end run: ingest, merge, curate, featurize, select, train, evaluate,
// attribute, audit. Writes every artifact under cfg.out_dir and returns the
// in-memory results. Reruns with an identical config and inputs produce
// byte-identical artifacts (no timestamps, fixed seeds, sorted JSON keys).
PipelineResult run(const PipelineConfig& cfg);

// manifest.json: {config, config_hash (FNV-1a 64 of the canonical config
// JSON), seed, artifact file names, stage summaries}.
void write_manifest(const PipelineConfig& cfg, const PipelineResult& result,
                    const std::string& path);

// Residual histogram with fixed bin width 0.1 anchored at the minimum
// residual; edges and counts, for the diagnostics artifact.
struct ResidualHistogram {
    double bin_width = 0.1;
    double first_edge = 0.0;
    std::vector<std::size_t> counts;
};
ResidualHistogram residual_histogram(const std::vector<double>& residuals,
                                     double bin_width = 0.1);

// Synthetic regression matrix with a known functional form, a planted noisy
// copy of the target ("leak") and pure-noise distractors; exercises the
// selection/audit path without real data.
struct SynthMatrixConfig {
    std::size_t n = 600;
    std::size_t p_clean = 10;
    double leak_noise_frac = 0.05;
    std::uint64_t seed = 7;
};
FeatureMatrix synth_matrix(const SynthMatrixConfig& cfg);

// Synthetic raw records that survive curation: physically plausible field
// values, parseable formulas, and two planted effective-mass columns carrying
// a noisy copy of the target for the audit to find.
struct SynthRecordsConfig {
    std::size_t n = 400;
    double leak_noise_frac = 0.05;
    std::uint64_t seed = 11;
};
std::vector<RawRecord> synth_records(const SynthRecordsConfig& cfg);

}  // namespace gapaudit::pipeline
