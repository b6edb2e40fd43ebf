#include "gapaudit/audit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "gapaudit/errors.hpp"

namespace gapaudit::audit {

std::string to_string(Risk r) {
    switch (r) {
        case Risk::low: return "low";
        case Risk::medium: return "medium";
        case Risk::high: return "high";
    }
    throw ConfigError("unknown risk value");
}

Risk risk_from_name(const std::string& s) {
    if (s == "low") return Risk::low;
    if (s == "medium") return Risk::medium;
    if (s == "high") return Risk::high;
    throw ConfigError("unknown risk level: " + s);
}

Risk RiskRegistry::risk_of(const std::string& column) const {
    auto it = entries.find(column);
    return it == entries.end() ? Risk::low : it->second.risk;
}

void RiskRegistry::set(const std::string& column, Risk risk,
                       const std::string& rationale) {
    entries[column] = {risk, rationale};
}

std::vector<std::string> RiskRegistry::columns_at(
    Risk r, const std::vector<std::string>& columns) const {
    std::vector<std::string> out;
    for (const auto& c : columns)
        if (risk_of(c) == r) out.push_back(c);
    return out;
}

RiskRegistry RiskRegistry::builtin() {
    RiskRegistry reg;
    reg.set("avg_elec_mass", Risk::high,
            "carrier effective mass comes from the curvature of the same band "
            "structure that defines the gap");
    reg.set("avg_hole_mass", Risk::high,
            "carrier effective mass comes from the curvature of the same band "
            "structure that defines the gap");
    reg.set("epsx", Risk::medium,
            "static dielectric response correlates with the gap but is computed "
            "from a separate perturbation");
    reg.set("epsy", Risk::medium,
            "static dielectric response correlates with the gap but is computed "
            "from a separate perturbation");
    reg.set("epsz", Risk::medium,
            "static dielectric response correlates with the gap but is computed "
            "from a separate perturbation");
    return reg;
}

void FlagThresholds::validate() const {
    if (!(min_delta_r2 >= 0)) throw ConfigError("min_delta_r2 must be >= 0");
    if (!(min_mae_reduction >= 0) || min_mae_reduction > 1)
        throw ConfigError("min_mae_reduction must lie in [0, 1]");
}

namespace {

std::map<std::string, learn::Metrics> eval_models(
    const FeatureMatrix& m, const std::vector<learn::ModelConfig>& models,
    const learn::SplitSpec& split) {
    if (models.empty()) throw ConfigError("at least one model is required");
    FeatureMatrix train = m.select_rows(split.train_indices);
    FeatureMatrix test = m.select_rows(split.test_indices);
    std::map<std::string, learn::Metrics> out;
    for (const auto& cfg : models) {
        if (out.count(cfg.name))
            throw ConfigError("duplicate model name: " + cfg.name);
        learn::AnyModel fitted = learn::fit_model(cfg, train);
        out[cfg.name] = learn::evaluate(fitted, test);
    }
    return out;
}

}  // namespace

std::map<std::string, learn::Metrics> baseline_eval(
    const FeatureMatrix& baseline, const std::vector<learn::ModelConfig>& models,
    const learn::SplitSpec& split, const RiskRegistry& registry) {
    for (const auto& name : baseline.column_names())
        if (registry.risk_of(name) == Risk::high)
            throw ProtocolError("protocol breach: high-risk column '" + name +
                                "' present in the baseline");
    return eval_models(baseline, models, split);
}

CandidateResult incremental_impact(
    const FeatureMatrix& baseline, const std::string& candidate_name,
    const std::vector<double>& candidate_column,
    const std::vector<learn::ModelConfig>& models, const learn::SplitSpec& split,
    const std::map<std::string, learn::Metrics>& baseline_metrics) {
    if (baseline.column_index(candidate_name) >= 0)
        throw DataError("candidate '" + candidate_name +
                        "' already sits in the baseline");
    if (candidate_column.size() != baseline.rows())
        throw DataError("candidate column length does not match the baseline");
    FeatureMatrix with = baseline;
    with.append_column(candidate_name, candidate_column);

    CandidateResult result;
    result.column = candidate_name;
    result.metrics = eval_models(with, models, split);
    for (const auto& [name, metrics] : result.metrics) {
        auto base = baseline_metrics.find(name);
        if (base == baseline_metrics.end())
            throw DataError("baseline metrics missing model: " + name);
        result.delta_r2[name] = metrics.r2 - base->second.r2;
        if (!(base->second.mae > 0))
            throw DataError("baseline MAE is zero for '" + name +
                            "': ratio undefined");
        result.mae_ratio[name] = metrics.mae / base->second.mae;
    }
    return result;
}

void flag(CandidateResult& result, const FlagThresholds& thresholds,
          std::size_t n_models) {
    thresholds.validate();
    if (n_models == 0) throw ConfigError("at least one model is required");
    std::size_t exceeding = 0;
    for (const auto& [name, delta] : result.delta_r2) {
        const double reduction = 1.0 - result.mae_ratio.at(name);
        if (delta >= thresholds.min_delta_r2 &&
            reduction >= thresholds.min_mae_reduction)
            ++exceeding;
    }
    result.models_exceeding = exceeding;
    result.flagged = exceeding >= (n_models + 1) / 2;
}

AuditReport run_audit(const FeatureMatrix& m, const learn::SplitSpec& split,
                      const std::vector<learn::ModelConfig>& models,
                      const RiskRegistry& registry, const FlagThresholds& thresholds) {
    thresholds.validate();
    if (models.empty()) throw ConfigError("audit needs at least one model");
    const std::vector<std::string> high =
        registry.columns_at(Risk::high, m.column_names());
    FeatureMatrix baseline =
        high.empty() ? m : m.drop_columns_by_name(high);
    if (baseline.cols() == 0)
        throw DataError("audit baseline would be empty after removing "
                        "high-risk columns");

    AuditReport report;
    report.baseline_columns = baseline.column_names();
    for (const auto& cfg : models) report.model_names.push_back(cfg.name);
    report.thresholds = thresholds;
    report.baseline_metrics = baseline_eval(baseline, models, split, registry);
    for (const auto& name : high) {
        const int idx = m.column_index(name);
        CandidateResult result =
            incremental_impact(baseline, name, m.column(static_cast<std::size_t>(idx)),
                               models, split, report.baseline_metrics);
        result.risk = registry.risk_of(name);
        flag(result, thresholds, models.size());
        if (result.flagged) report.flagged_columns.push_back(name);
        report.candidates.push_back(std::move(result));
    }
    return report;
}

namespace {

nlohmann::json metrics_json(const learn::Metrics& m) {
    return {{"r2", m.r2},
            {"mae", m.mae},
            {"mse", m.mse},
            {"residual_mean", m.residual_mean},
            {"residual_std", m.residual_std}};
}

}  // namespace

void write_audit_report(const AuditReport& report, const std::string& path) {
    nlohmann::json j;
    j["baseline_columns"] = report.baseline_columns;
    j["model_names"] = report.model_names;
    j["thresholds"] = {{"min_delta_r2", report.thresholds.min_delta_r2},
                       {"min_mae_reduction", report.thresholds.min_mae_reduction}};
    j["baseline_metrics"] = nlohmann::json::object();
    for (const auto& [name, m] : report.baseline_metrics)
        j["baseline_metrics"][name] = metrics_json(m);
    j["candidates"] = nlohmann::json::array();
    for (const auto& c : report.candidates) {
        nlohmann::json jc;
        jc["column"] = c.column;
        jc["risk"] = to_string(c.risk);
        jc["metrics"] = nlohmann::json::object();
        for (const auto& [name, m] : c.metrics) jc["metrics"][name] = metrics_json(m);
        jc["delta_r2"] = c.delta_r2;
        jc["mae_ratio"] = c.mae_ratio;
        jc["models_exceeding"] = c.models_exceeding;
        jc["flagged"] = c.flagged;
        j["candidates"].push_back(std::move(jc));
    }
    j["flagged_columns"] = report.flagged_columns;
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw ConfigError("write failed: " + path);
}

}  // namespace gapaudit::audit
