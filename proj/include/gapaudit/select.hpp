#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gapaudit/learn.hpp"
#include "gapaudit/matrix.hpp"

namespace gapaudit::select {

struct SelectConfig {
    double variance_threshold = 0.001;  // population variance on raw columns
    double correlation_cutoff = 0.95;   // absolute Pearson
    std::size_t sweep_start = 10;
    std::size_t sweep_step = 5;
    void validate() const;
};

struct DropLogEntry {
    std::string column;
    std::string reason;  // "variance" or "correlation"
    std::string detail;  // variance value, or the retained partner column
};

struct ImportanceEntry {
    std::string column;
    double total_gain = 0.0;
};

struct SweepPoint {
    std::size_t size = 0;
    double r2 = 0.0;
    double mae = 0.0;
    double mse = 0.0;
};

struct SweepResult {
    std::vector<SweepPoint> points;
    std::size_t best_size = 0;  // max r2, ties toward the smallest size
    double best_r2 = 0.0;
};

struct SelectionReport {
    std::size_t columns_in = 0;
    std::vector<DropLogEntry> dropped;        // variance drops then correlation drops
    std::vector<std::string> cleaned;         // surviving column names, order preserved
    std::vector<ImportanceEntry> importance;  // descending gain, ties by column order
    SweepResult sweep;
    std::vector<std::string> selected;        // top best_size by importance
};

// Removes columns whose population variance falls below the threshold;
// survivor order preserved. Dropping everything is an error.
std::pair<FeatureMatrix, std::vector<DropLogEntry>> variance_filter(
    const FeatureMatrix& m, double threshold);

// Greedy |Pearson| pruning, columns scanned left to right: a column whose
// correlation with any earlier kept column reaches the cutoff drops.
// Zero-variance columns are an error (variance_filter runs first).
std::pair<FeatureMatrix, std::vector<DropLogEntry>> correlation_filter(
    const FeatureMatrix& m, double cutoff);

// Fits the ranking model on the full matrix and orders columns by total
// split gain, descending; ties by column order. Unused columns keep gain 0.
std::vector<ImportanceEntry> importance_ranking(const FeatureMatrix& m,
                                                const learn::ModelConfig& model);

// Retrains the sweep model on top-k prefixes of the ranking (k = start,
// start+step, ..., the full count always included) against the fixed split.
SweepResult subset_sweep(const FeatureMatrix& m,
                         const std::vector<ImportanceEntry>& ranking,
                         const learn::SplitSpec& split,
                         const learn::ModelConfig& model, const SelectConfig& cfg);

// Variance screen, correlation pruning, gain ranking, sweep.
SelectionReport run_selection(const FeatureMatrix& m, const learn::SplitSpec& split,
                              const learn::ModelConfig& ranking_model,
                              const SelectConfig& cfg);

void write_selection_report(const SelectionReport& report, const std::string& path);

// Pearson correlation; inputs must be same length, n >= 2, nonzero variance.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace gapaudit::select
