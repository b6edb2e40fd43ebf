#include "gapaudit/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gapaudit/errors.hpp"
#include "gapaudit/formula.hpp"
#include "csv_util.hpp"

namespace gapaudit::ingest {

namespace {

using nlohmann::json;

bool tensor_from_json(const json& j, TensorSites& out) {
    if (!j.is_array()) return false;
    TensorSites sites;
    for (const auto& site : j) {
        if (!site.is_array() || site.size() != 3) return false;
        std::array<std::array<double, 3>, 3> t{};
        for (std::size_t r = 0; r < 3; ++r) {
            if (!site[r].is_array() || site[r].size() != 3) return false;
            for (std::size_t c = 0; c < 3; ++c) {
                if (!site[r][c].is_number()) return false;
                t[r][c] = site[r][c].get<double>();
            }
        }
        sites.push_back(t);
    }
    out = std::move(sites);
    return true;
}

Value value_from_json(const json& j, std::size_t lineno) {
    if (j.is_null()) return std::monostate{};
    if (j.is_number()) return j.get<double>();
    if (j.is_boolean()) return j.get<bool>() ? 1.0 : 0.0;
    if (j.is_string()) return j.get<std::string>();
    if (j.is_array()) {
        TensorSites sites;
        if (tensor_from_json(j, sites)) return sites;
        // Keep the malformed payload so later consumers can name the record.
        return j.dump();
    }
    throw ParseError("line " + std::to_string(lineno) +
                     ": unsupported value type " + std::string(j.type_name()));
}

RawRecord record_from_json(const json& j, std::size_t lineno) {
    if (!j.is_object())
        throw ParseError("line " + std::to_string(lineno) + ": expected a JSON object");
    RawRecord rec;
    for (const auto& [key, val] : j.items()) {
        if (key == "id") {
            if (!val.is_string())
                throw ParseError("line " + std::to_string(lineno) + ": id must be a string");
            rec.id = val.get<std::string>();
        } else if (key == "formula") {
            if (!val.is_string())
                throw ParseError("line " + std::to_string(lineno) +
                                 ": formula must be a string");
            rec.formula = val.get<std::string>();
        } else {
            rec.values[key] = value_from_json(val, lineno);
        }
    }
    if (rec.id.empty())
        throw ParseError("line " + std::to_string(lineno) + ": missing or empty id");
    if (!j.contains("formula"))
        throw ParseError("line " + std::to_string(lineno) + ": missing formula");
    return rec;
}

Value value_from_csv_cell(const std::string& cell) {
    if (cell.empty()) return std::monostate{};
    std::string t = detail::trim(cell);
    if (!t.empty() && (t[0] == '[')) {
        json j = json::parse(t, nullptr, false);
        if (!j.is_discarded()) {
            TensorSites sites;
            if (tensor_from_json(j, sites)) return sites;
        }
        return cell;
    }
    char* end = nullptr;
    double v = std::strtod(t.c_str(), &end);
    if (end == t.c_str() + t.size() && !t.empty()) return v;
    return cell;
}

std::vector<RawRecord> parse_jsonl(std::istream& in) {
    std::vector<RawRecord> records;
    std::set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ParseError("line " + std::to_string(lineno) + ": malformed JSON");
        RawRecord rec = record_from_json(j, lineno);
        if (!ids.insert(rec.id).second)
            throw ParseError("line " + std::to_string(lineno) + ": duplicate id '" +
                             rec.id + "'");
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<RawRecord> parse_csv(std::istream& in) {
    std::vector<RawRecord> records;
    std::set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    int id_col = -1, formula_col = -1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::vector<std::string> cells;
        try {
            cells = detail::split_csv_line(line);
        } catch (const ParseError& e) {
            throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
        }
        if (header.empty()) {
            header = cells;
            for (std::size_t i = 0; i < header.size(); ++i) {
                if (header[i] == "id") id_col = static_cast<int>(i);
                if (header[i] == "formula") formula_col = static_cast<int>(i);
            }
            if (id_col < 0 || formula_col < 0)
                throw ParseError("line " + std::to_string(lineno) +
                                 ": csv header must contain id and formula");
            std::set<std::string> names(header.begin(), header.end());
            if (names.size() != header.size())
                throw ParseError("line " + std::to_string(lineno) +
                                 ": duplicate csv column name");
            continue;
        }
        if (cells.size() != header.size())
            throw ParseError("line " + std::to_string(lineno) + ": expected " +
                             std::to_string(header.size()) + " cells, got " +
                             std::to_string(cells.size()));
        RawRecord rec;
        rec.id = cells[static_cast<std::size_t>(id_col)];
        rec.formula = cells[static_cast<std::size_t>(formula_col)];
        if (rec.id.empty())
            throw ParseError("line " + std::to_string(lineno) + ": missing or empty id");
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (static_cast<int>(i) == id_col || static_cast<int>(i) == formula_col)
                continue;
            rec.values[header[i]] = value_from_csv_cell(cells[i]);
        }
        if (!ids.insert(rec.id).second)
            throw ParseError("line " + std::to_string(lineno) + ": duplicate id '" +
                             rec.id + "'");
        records.push_back(std::move(rec));
    }
    if (header.empty()) return {};
    return records;
}

bool tensor_finite(const TensorSites& sites) {
    for (const auto& site : sites)
        for (const auto& row : site)
            for (double v : row)
                if (!std::isfinite(v)) return false;
    return true;
}

json value_to_json(const Value& v) {
    if (const double* d = std::get_if<double>(&v)) return *d;
    if (const std::string* s = std::get_if<std::string>(&v)) return *s;
    if (const TensorSites* t = std::get_if<TensorSites>(&v)) {
        json sites = json::array();
        for (const auto& site : *t) {
            json rows = json::array();
            for (const auto& row : site) rows.push_back(json(row));
            sites.push_back(rows);
        }
        return sites;
    }
    return nullptr;
}

bool numbers_conflict(double a, double b) {
    if (a == b) return false;
    double scale = std::max(std::fabs(a), std::fabs(b));
    return std::fabs(a - b) > 1e-6 * scale;
}

}  // namespace

Format format_from_name(const std::string& s) {
    if (s == "jsonl" || s == "json") return Format::jsonl;
    if (s == "csv") return Format::csv;
    throw ConfigError("unknown input format '" + s + "' (expected jsonl or csv)");
}

std::vector<RawRecord> parse_records(std::istream& in, Format format) {
    return format == Format::jsonl ? parse_jsonl(in) : parse_csv(in);
}

std::vector<RawRecord> parse_records_file(const std::string& path, Format format) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open: " + path);
    try {
        return parse_records(in, format);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

RawRecord normalize_missing(const RawRecord& record) {
    static const std::set<std::string> placeholders = {"na", "[]", "None", "nan"};
    RawRecord out;
    out.id = record.id;
    out.formula = record.formula;
    for (const auto& [name, value] : record.values) {
        Value v = value;
        if (const std::string* s = std::get_if<std::string>(&v)) {
            if (placeholders.count(detail::trim(*s))) v = std::monostate{};
        } else if (const double* d = std::get_if<double>(&v)) {
            if (!std::isfinite(*d)) v = std::monostate{};
        } else if (const TensorSites* t = std::get_if<TensorSites>(&v)) {
            if (t->empty() || !tensor_finite(*t)) v = std::monostate{};
        }
        out.values[name] = v;
    }
    return out;
}

std::vector<RawRecord> normalize_missing(const std::vector<RawRecord>& records) {
    std::vector<RawRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(normalize_missing(r));
    return out;
}

std::pair<std::vector<RawRecord>, SourceMergeReport> merge_sources(
    const std::vector<RawRecord>& a, const std::vector<RawRecord>& b) {
    SourceMergeReport report;
    report.records_in_a = a.size();
    report.records_in_b = b.size();

    std::set<std::string> fields_a, fields_b;
    for (const auto& r : a)
        for (const auto& [name, v] : r.values)
            if (!is_missing(v)) fields_a.insert(name);
    for (const auto& r : b)
        for (const auto& [name, v] : r.values)
            if (!is_missing(v)) fields_b.insert(name);
    std::set_intersection(fields_a.begin(), fields_a.end(), fields_b.begin(),
                          fields_b.end(), std::back_inserter(report.shared_fields));

    std::map<std::string, std::size_t> b_index;
    for (std::size_t i = 0; i < b.size(); ++i) b_index[b[i].id] = i;

    std::vector<RawRecord> merged;
    merged.reserve(a.size() + b.size());
    std::set<std::string> merged_ids;
    for (const auto& ra : a) {
        RawRecord rec = ra;
        auto it = b_index.find(ra.id);
        if (it != b_index.end()) {
            const RawRecord& rb = b[it->second];
            for (const auto& [name, vb] : rb.values) {
                if (is_missing(vb)) continue;
                auto cur = rec.values.find(name);
                if (cur == rec.values.end() || is_missing(cur->second)) {
                    rec.values[name] = vb;
                    continue;
                }
                const double* da = std::get_if<double>(&cur->second);
                const double* db = std::get_if<double>(&vb);
                if (da && db && numbers_conflict(*da, *db))
                    throw DataError("merge conflict for id " + ra.id + " field " + name +
                                    ": " + detail::fmt_double(*da) + " vs " +
                                    detail::fmt_double(*db));
                const TensorSites* ta = std::get_if<TensorSites>(&cur->second);
                const TensorSites* tb = std::get_if<TensorSites>(&vb);
                if (ta && tb) {
                    bool conflict = ta->size() != tb->size();
                    for (std::size_t s = 0; !conflict && s < ta->size(); ++s)
                        for (std::size_t r = 0; !conflict && r < 3; ++r)
                            for (std::size_t c = 0; !conflict && c < 3; ++c)
                                conflict = numbers_conflict((*ta)[s][r][c], (*tb)[s][r][c]);
                    if (conflict)
                        throw DataError("merge conflict for id " + ra.id + " field " +
                                        name + ": tensors disagree");
                }
                // Non-numeric agreement is not enforced; the first source wins.
            }
        }
        merged_ids.insert(rec.id);
        merged.push_back(std::move(rec));
    }
    for (const auto& rb : b)
        if (!merged_ids.count(rb.id)) merged.push_back(rb);
    report.merged_total = merged.size();
    return {std::move(merged), std::move(report)};
}

std::pair<std::vector<RawRecord>, SourceMergeReport> dedup_lowest_energy(
    const std::vector<RawRecord>& records) {
    SourceMergeReport report;
    report.merged_total = records.size();

    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < records.size(); ++i) {
        try {
            groups[features::parse_formula(records[i].formula).reduced_key()].push_back(i);
        } catch (const ParseError&) {
            ++report.unparseable_formulas;
        }
    }

    std::vector<bool> keep(records.size(), false);
    for (const auto& [key, members] : groups) {
        if (members.size() == 1) {
            keep[members[0]] = true;
            continue;
        }
        // Only records with a formation energy can compete; a group without
        // any yields no survivor.
        bool found = false;
        std::size_t best = 0;
        double best_e = 0;
        for (std::size_t i : members) {
            auto e = records[i].numeric(field::formation_energy);
            if (!e) continue;
            if (!found || *e < best_e || (*e == best_e && records[i].id < records[best].id)) {
                found = true;
                best = i;
                best_e = *e;
            }
        }
        if (found) keep[best] = true;
    }

    std::vector<RawRecord> out;
    for (std::size_t i = 0; i < records.size(); ++i)
        if (keep[i]) out.push_back(records[i]);
    report.dedup_groups = groups.size();
    report.dedup_survivors = out.size();
    return {std::move(out), std::move(report)};
}

void write_records_jsonl(const std::vector<RawRecord>& records, std::ostream& out) {
    for (const auto& rec : records) {
        json j;
        j["id"] = rec.id;
        j["formula"] = rec.formula;
        for (const auto& [name, v] : rec.values) {
            if (is_missing(v)) continue;
            j[name] = value_to_json(v);
        }
        out << j.dump() << '\n';
    }
}

void write_records_jsonl_file(const std::vector<RawRecord>& records,
                              const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open for writing: " + path);
    write_records_jsonl(records, out);
    if (!out) throw ConfigError("write failed: " + path);
}

}  // namespace gapaudit::ingest
