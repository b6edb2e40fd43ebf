#include "gapaudit/select.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "gapaudit/errors.hpp"
#include "csv_util.hpp"

namespace gapaudit::select {

void SelectConfig::validate() const {
    if (!(variance_threshold >= 0))
        throw ConfigError("variance_threshold must be >= 0");
    if (!(correlation_cutoff > 0) || correlation_cutoff > 1)
        throw ConfigError("correlation_cutoff must lie in (0, 1]");
    if (sweep_start == 0) throw ConfigError("sweep_start must be >= 1");
    if (sweep_step == 0) throw ConfigError("sweep_step must be >= 1");
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DataError("pearson inputs differ in length");
    const std::size_t n = a.size();
    if (n < 2) throw DataError("pearson needs at least two observations");
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0 || sbb <= 0)
        throw DataError("pearson undefined for a constant input");
    return sab / std::sqrt(saa * sbb);
}

namespace {

double population_variance(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double mean = 0;
    for (double x : v) mean += x;
    mean /= n;
    double acc = 0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return acc / n;
}

}  // namespace

std::pair<FeatureMatrix, std::vector<DropLogEntry>> variance_filter(
    const FeatureMatrix& m, double threshold) {
    if (m.cols() == 0) throw DataError("variance filter on an empty matrix");
    if (m.rows() == 0) throw DataError("variance filter needs rows");
    std::vector<std::size_t> keep;
    std::vector<DropLogEntry> dropped;
    for (std::size_t c = 0; c < m.cols(); ++c) {
        const double var = population_variance(m.column(c));
        if (var < threshold)
            dropped.push_back({m.column_names()[c], "variance", detail::fmt_double(var)});
        else
            keep.push_back(c);
    }
    if (keep.empty())
        throw DataError("variance filter removed every column");
    return {m.select_columns(keep), std::move(dropped)};
}

std::pair<FeatureMatrix, std::vector<DropLogEntry>> correlation_filter(
    const FeatureMatrix& m, double cutoff) {
    if (m.cols() == 0) throw DataError("correlation filter on an empty matrix");
    std::vector<std::size_t> keep;
    std::vector<std::vector<double>> kept_columns;
    std::vector<DropLogEntry> dropped;
    for (std::size_t c = 0; c < m.cols(); ++c) {
        std::vector<double> col = m.column(c);
        std::string partner;
        for (std::size_t k = 0; k < keep.size(); ++k) {
            if (std::fabs(pearson(kept_columns[k], col)) >= cutoff) {
                partner = m.column_names()[keep[k]];
                break;
            }
        }
        if (partner.empty()) {
            keep.push_back(c);
            kept_columns.push_back(std::move(col));
        } else {
            dropped.push_back({m.column_names()[c], "correlation", partner});
        }
    }
    return {m.select_columns(keep), std::move(dropped)};
}

std::vector<ImportanceEntry> importance_ranking(const FeatureMatrix& m,
                                                const learn::ModelConfig& model) {
    if (model.kind == learn::ModelConfig::Kind::ridge)
        throw ConfigError("importance ranking requires a tree-based model");
    learn::AnyModel fitted = learn::fit_model(model, m);
    const auto& ens = std::get<learn::Ensemble>(fitted);
    std::vector<double> gain(m.cols(), 0.0);
    for (const auto& tree : ens.trees) tree.accumulate_gain(gain);
    std::vector<ImportanceEntry> out(m.cols());
    for (std::size_t c = 0; c < m.cols(); ++c)
        out[c] = {m.column_names()[c], gain[c]};
    std::stable_sort(out.begin(), out.end(),
                     [](const ImportanceEntry& a, const ImportanceEntry& b) {
                         return a.total_gain > b.total_gain;
                     });
    return out;
}

SweepResult subset_sweep(const FeatureMatrix& m,
                         const std::vector<ImportanceEntry>& ranking,
                         const learn::SplitSpec& split,
                         const learn::ModelConfig& model, const SelectConfig& cfg) {
    cfg.validate();
    if (ranking.size() != m.cols())
        throw DataError("ranking does not cover the matrix columns");
    std::vector<std::size_t> sizes;
    for (std::size_t k = cfg.sweep_start; k < m.cols(); k += cfg.sweep_step)
        sizes.push_back(k);
    if (sizes.empty() || sizes.back() != m.cols()) sizes.push_back(m.cols());

    SweepResult result;
    std::vector<std::string> prefix;
    prefix.reserve(m.cols());
    for (const auto& entry : ranking) prefix.push_back(entry.column);
    for (std::size_t k : sizes) {
        std::vector<std::string> names(prefix.begin(),
                                       prefix.begin() + static_cast<long>(k));
        FeatureMatrix sub = m.select_columns_by_name(names);
        FeatureMatrix train = sub.select_rows(split.train_indices);
        FeatureMatrix test = sub.select_rows(split.test_indices);
        learn::AnyModel fitted = learn::fit_model(model, train);
        learn::Metrics metrics = learn::evaluate(fitted, test);
        result.points.push_back({k, metrics.r2, metrics.mae, metrics.mse});
    }
    result.best_size = result.points.front().size;
    result.best_r2 = result.points.front().r2;
    for (const auto& point : result.points) {
        if (point.r2 > result.best_r2) {
            result.best_r2 = point.r2;
            result.best_size = point.size;
        }
    }
    return result;
}

SelectionReport run_selection(const FeatureMatrix& m, const learn::SplitSpec& split,
                              const learn::ModelConfig& ranking_model,
                              const SelectConfig& cfg) {
    cfg.validate();
    SelectionReport report;
    report.columns_in = m.cols();
    auto [after_variance, var_drops] = variance_filter(m, cfg.variance_threshold);
    auto [cleaned, corr_drops] =
        correlation_filter(after_variance, cfg.correlation_cutoff);
    report.dropped = std::move(var_drops);
    report.dropped.insert(report.dropped.end(), corr_drops.begin(), corr_drops.end());
    report.cleaned = cleaned.column_names();
    report.importance = importance_ranking(cleaned, ranking_model);
    report.sweep = subset_sweep(cleaned, report.importance, split, ranking_model, cfg);
    for (std::size_t i = 0; i < report.sweep.best_size; ++i)
        report.selected.push_back(report.importance[i].column);
    return report;
}

void write_selection_report(const SelectionReport& report, const std::string& path) {
    nlohmann::json j;
    j["columns_in"] = report.columns_in;
    j["dropped"] = nlohmann::json::array();
    for (const auto& d : report.dropped)
        j["dropped"].push_back(
            {{"column", d.column}, {"reason", d.reason}, {"detail", d.detail}});
    j["cleaned"] = report.cleaned;
    j["importance"] = nlohmann::json::array();
    for (const auto& e : report.importance)
        j["importance"].push_back({{"column", e.column}, {"total_gain", e.total_gain}});
    nlohmann::json sweep;
    sweep["best_size"] = report.sweep.best_size;
    sweep["best_r2"] = report.sweep.best_r2;
    sweep["points"] = nlohmann::json::array();
    for (const auto& p : report.sweep.points)
        sweep["points"].push_back(
            {{"size", p.size}, {"r2", p.r2}, {"mae", p.mae}, {"mse", p.mse}});
    j["sweep"] = std::move(sweep);
    j["selected"] = report.selected;
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw ConfigError("write failed: " + path);
}

}  // namespace gapaudit::select
