#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "gapaudit/record.hpp"

namespace gapaudit::ingest {

enum class Format { jsonl, csv };

Format format_from_name(const std::string& s);

struct SourceMergeReport {
    std::size_t records_in_a = 0;
    std::size_t records_in_b = 0;
    std::size_t merged_total = 0;
    std::vector<std::string> shared_fields;
    std::size_t dedup_groups = 0;
    std::size_t dedup_survivors = 0;
    std::size_t unparseable_formulas = 0;
};

// One record per jsonl line / csv row. Unknown descriptor names are kept
// verbatim. Throws ParseError naming the offending line; duplicate ids
// within one source are an error.
std::vector<RawRecord> parse_records(std::istream& in, Format format);
std::vector<RawRecord> parse_records_file(const std::string& path, Format format);

// Placeholder strings ("na", "[]", "None", "nan" after whitespace trim),
// non-finite numerics and empty tensor stacks all become missing. Total
// and idempotent.
RawRecord normalize_missing(const RawRecord& record);
std::vector<RawRecord> normalize_missing(const std::vector<RawRecord>& records);

// Union keyed by id; values from b fill gaps in a. Non-missing numeric
// values for the same id/field must agree to 1e-6 relative tolerance.
std::pair<std::vector<RawRecord>, SourceMergeReport> merge_sources(
    const std::vector<RawRecord>& a, const std::vector<RawRecord>& b);

// Groups records by reduced composition and keeps the one with minimal
// formation energy per atom (ties: lexicographically smallest id). Records
// without formation energy survive only in single-member groups; records
// with unparseable formulas are dropped and counted.
std::pair<std::vector<RawRecord>, SourceMergeReport> dedup_lowest_energy(
    const std::vector<RawRecord>& records);

// Canonical JSONL emission (missing values omitted, keys sorted).
void write_records_jsonl(const std::vector<RawRecord>& records, std::ostream& out);
void write_records_jsonl_file(const std::vector<RawRecord>& records,
                              const std::string& path);

}  // namespace gapaudit::ingest
