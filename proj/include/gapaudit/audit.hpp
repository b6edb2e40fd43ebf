#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "gapaudit/learn.hpp"
#include "gapaudit/matrix.hpp"

namespace gapaudit::audit {

enum class Risk { low, medium, high };

std::string to_string(Risk r);
Risk risk_from_name(const std::string& s);

// Column name -> a-priori leakage risk, with rationale. Defaults: carrier
// effective masses are high (band-curvature derived, same computation as the
// target), dielectric tensor components medium (physically correlated but not
// target-encoding), everything else low.
struct RiskRegistry {
    struct Entry {
        Risk risk = Risk::low;
        std::string rationale;
    };
    std::map<std::string, Entry> entries;

    Risk risk_of(const std::string& column) const;
    void set(const std::string& column, Risk risk, const std::string& rationale = "");
    std::vector<std::string> columns_at(Risk r,
                                        const std::vector<std::string>& columns) const;
    static RiskRegistry builtin();
};

struct FlagThresholds {
    double min_delta_r2 = 0.05;
    double min_mae_reduction = 0.25;  // relative: 1 - mae_with/mae_without
    void validate() const;
};

// Trains every configured model on the fixed split and returns test metrics
// keyed by config name. The matrix must not contain any registry-high column.
std::map<std::string, learn::Metrics> baseline_eval(
    const FeatureMatrix& baseline, const std::vector<learn::ModelConfig>& models,
    const learn::SplitSpec& split, const RiskRegistry& registry);

struct CandidateResult {
    std::string column;
    Risk risk = Risk::high;
    std::map<std::string, learn::Metrics> metrics;  // per model, with candidate added
    std::map<std::string, double> delta_r2;         // candidate.r2 - baseline.r2
    std::map<std::string, double> mae_ratio;        // candidate.mae / baseline.mae
    std::size_t models_exceeding = 0;               // models clearing both thresholds
    bool flagged = false;
};

// Retrains each model on baseline + the candidate column with the same split;
// candidate length must match the baseline rows and its name must be absent
// from the baseline.
CandidateResult incremental_impact(const FeatureMatrix& baseline,
                                   const std::string& candidate_name,
                                   const std::vector<double>& candidate_column,
                                   const std::vector<learn::ModelConfig>& models,
                                   const learn::SplitSpec& split,
                                   const std::map<std::string, learn::Metrics>& baseline_metrics);

// flagged <=> delta_r2 >= min_delta_r2 AND (1 - mae_ratio) >= min_mae_reduction
// for at least half the models, rounding up.
void flag(CandidateResult& result, const FlagThresholds& thresholds,
          std::size_t n_models);

struct AuditReport {
    std::vector<std::string> baseline_columns;
    std::vector<std::string> model_names;
    FlagThresholds thresholds;
    std::map<std::string, learn::Metrics> baseline_metrics;
    std::vector<CandidateResult> candidates;
    std::vector<std::string> flagged_columns;
};

// Full protocol: strips the registry's high-risk columns out of the matrix,
// evaluates the baseline, re-adds each high-risk column individually, flags.
AuditReport run_audit(const FeatureMatrix& m, const learn::SplitSpec& split,
                      const std::vector<learn::ModelConfig>& models,
                      const RiskRegistry& registry = RiskRegistry::builtin(),
                      const FlagThresholds& thresholds = {});

void write_audit_report(const AuditReport& report, const std::string& path);

}  // namespace gapaudit::audit
