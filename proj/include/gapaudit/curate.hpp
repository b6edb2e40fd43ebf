#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gapaudit/record.hpp"

namespace gapaudit::curate {

struct FilterConfig {
    double poisson_min = 0.1;
    double poisson_max = 0.5;
    double bulk_max_gpa = 300.0;
    double shear_max_gpa = 200.0;
    double eps_cap = 100.0;
    std::vector<std::string> required_fields = core_required_fields();
    std::vector<std::string> allowed_dimensionalities = {"2D", "3D"};

    void validate() const;
};

// A record that passed every filter; carries the derived flag and the
// (possibly reconstructed) max_efg alongside the original value map.
struct CuratedRecord {
    RawRecord base;
    bool is_3d = false;
    double max_efg = 0.0;

    double numeric(const std::string& name) const;  // throws DataError if absent
};

struct FunnelStage {
    std::string stage;
    std::size_t records_in = 0;
    std::size_t records_out = 0;
    std::string reason;
};

struct CurationFunnel {
    std::vector<FunnelStage> stages;
    std::size_t final_count = 0;
};

// Native max_efg if present, else the maximum absolute EFG tensor component
// over all sites, else nothing. Non-numeric tensor payloads are a data error.
std::optional<double> reconstruct_max_efg(const RawRecord& record);

// The fixed filter sequence: required fields -> formation energy <= 0 ->
// Poisson window -> moduli caps -> dielectric window -> space group ->
// dimensionality (is_3D derived) -> max_efg reconstruction. Exclusions are
// counted per stage, never silent.
std::pair<std::vector<CuratedRecord>, CurationFunnel> apply_filters(
    const std::vector<RawRecord>& records, const FilterConfig& cfg);

// Precondition: dimensionality is 2D or 3D (trimmed, case-folded).
bool derive_is_3d(const RawRecord& record);

// Re-checks one curated record against the config; empty when clean.
std::vector<std::string> violations(const CuratedRecord& record, const FilterConfig& cfg);

void write_curated_jsonl_file(const std::vector<CuratedRecord>& records,
                              const std::string& path);
std::vector<CuratedRecord> read_curated_jsonl_file(const std::string& path);

}  // namespace gapaudit::curate
