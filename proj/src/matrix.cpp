#include "gapaudit/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gapaudit/errors.hpp"
#include "csv_util.hpp"

namespace gapaudit {

std::string phase_name(Phase p) {
    switch (p) {
        case Phase::I: return "I";
        case Phase::II: return "II";
        case Phase::III: return "III";
    }
    throw ConfigError("invalid phase value");
}

Phase phase_from_name(const std::string& s) {
    if (s == "I" || s == "1") return Phase::I;
    if (s == "II" || s == "2") return Phase::II;
    if (s == "III" || s == "3") return Phase::III;
    throw ConfigError("unknown phase '" + s + "' (expected I, II or III)");
}

FeatureMatrix::FeatureMatrix(std::vector<std::string> column_names, std::size_t n_rows)
    : column_names_(std::move(column_names)),
      data_(n_rows * column_names_.size(), 0.0),
      target_(n_rows, 0.0),
      row_ids_(n_rows),
      n_(n_rows) {}

std::vector<double> FeatureMatrix::column(std::size_t c) const {
    if (c >= cols()) throw DataError("column index out of range");
    std::vector<double> out(n_);
    for (std::size_t r = 0; r < n_; ++r) out[r] = at(r, c);
    return out;
}

int FeatureMatrix::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < column_names_.size(); ++i)
        if (column_names_[i] == name) return static_cast<int>(i);
    return -1;
}

FeatureMatrix FeatureMatrix::select_columns(const std::vector<std::size_t>& keep) const {
    std::vector<std::string> names;
    names.reserve(keep.size());
    for (std::size_t c : keep) {
        if (c >= cols()) throw DataError("column index out of range");
        names.push_back(column_names_[c]);
    }
    FeatureMatrix out(std::move(names), n_);
    for (std::size_t r = 0; r < n_; ++r)
        for (std::size_t i = 0; i < keep.size(); ++i) out.at(r, i) = at(r, keep[i]);
    out.target_ = target_;
    out.row_ids_ = row_ids_;
    out.phase = phase;
    out.target_name = target_name;
    return out;
}

FeatureMatrix FeatureMatrix::select_columns_by_name(
    const std::vector<std::string>& names) const {
    std::vector<std::size_t> keep;
    keep.reserve(names.size());
    for (const auto& name : names) {
        int idx = column_index(name);
        if (idx < 0) throw DataError("no such column: " + name);
        keep.push_back(static_cast<std::size_t>(idx));
    }
    return select_columns(keep);
}

FeatureMatrix FeatureMatrix::drop_columns_by_name(
    const std::vector<std::string>& names) const {
    std::vector<std::size_t> keep;
    for (std::size_t c = 0; c < cols(); ++c) {
        if (std::find(names.begin(), names.end(), column_names_[c]) == names.end())
            keep.push_back(c);
    }
    return select_columns(keep);
}

void FeatureMatrix::append_column(const std::string& name,
                                  const std::vector<double>& values) {
    if (values.size() != n_) throw DataError("column length mismatch for " + name);
    if (column_index(name) >= 0) throw DataError("duplicate column name: " + name);
    std::vector<double> grown(n_ * (cols() + 1));
    for (std::size_t r = 0; r < n_; ++r) {
        std::copy_n(data_.data() + r * cols(), cols(), grown.data() + r * (cols() + 1));
        grown[r * (cols() + 1) + cols()] = values[r];
    }
    data_ = std::move(grown);
    column_names_.push_back(name);
}

FeatureMatrix FeatureMatrix::select_rows(const std::vector<std::size_t>& keep) const {
    FeatureMatrix out(column_names_, keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        std::size_t r = keep[i];
        if (r >= n_) throw DataError("row index out of range");
        std::copy_n(data_.data() + r * cols(), cols(), out.data_.data() + i * cols());
        out.target_[i] = target_[r];
        out.row_ids_[i] = row_ids_[r];
    }
    out.phase = phase;
    out.target_name = target_name;
    return out;
}

void FeatureMatrix::validate() const {
    if (target_.size() != n_ || row_ids_.size() != n_)
        throw DataError("matrix target/id length mismatch");
    if (data_.size() != n_ * cols()) throw DataError("matrix storage size mismatch");
    std::set<std::string> seen;
    for (const auto& name : column_names_) {
        if (name.empty()) throw DataError("empty column name");
        if (!seen.insert(name).second) throw DataError("duplicate column name: " + name);
    }
    for (double v : data_)
        if (!std::isfinite(v)) throw DataError("non-finite matrix entry");
    for (double v : target_)
        if (!std::isfinite(v)) throw DataError("non-finite target entry");
}

void write_matrix_csv(const FeatureMatrix& m, const std::string& csv_path,
                      const std::string& meta_path) {
    std::ofstream out(csv_path);
    if (!out) throw ConfigError("cannot open for writing: " + csv_path);
    out << "row_id";
    for (const auto& name : m.column_names()) out << ',' << detail::csv_escape(name);
    out << ',' << detail::csv_escape(m.target_name) << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        out << detail::csv_escape(m.row_ids()[r]);
        for (std::size_t c = 0; c < m.cols(); ++c)
            out << ',' << detail::fmt_double(m.at(r, c));
        out << ',' << detail::fmt_double(m.target()[r]) << '\n';
    }
    if (!out) throw ConfigError("write failed: " + csv_path);
    if (meta_path.empty()) return;
    nlohmann::json meta{{"phase", phase_name(m.phase)},
                        {"n", m.rows()},
                        {"p", m.cols()},
                        {"column_names", m.column_names()},
                        {"target_name", m.target_name}};
    std::ofstream mf(meta_path);
    if (!mf) throw ConfigError("cannot open for writing: " + meta_path);
    mf << meta.dump(2) << '\n';
}

FeatureMatrix read_matrix_csv(const std::string& csv_path, const std::string& meta_path) {
    std::ifstream in(csv_path);
    if (!in) throw ConfigError("cannot open: " + csv_path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(csv_path + ": empty matrix file");
    auto header = detail::split_csv_line(line);
    if (header.size() < 2 || header[0] != "row_id")
        throw ParseError(csv_path + ": expected header row_id,<columns...>,<target>");
    std::vector<std::string> columns(header.begin() + 1, header.end() - 1);
    FeatureMatrix m(columns, 0);

    std::vector<double> data;
    std::vector<double> target;
    std::vector<std::string> ids;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError(csv_path + ":" + std::to_string(lineno) +
                             ": expected " + std::to_string(header.size()) + " cells, got " +
                             std::to_string(cells.size()));
        ids.push_back(cells[0]);
        for (std::size_t i = 1; i < cells.size(); ++i) {
            double v = 0;
            const std::string& cell = cells[i];
            auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc{} || p != cell.data() + cell.size())
                throw ParseError(csv_path + ":" + std::to_string(lineno) +
                                 ": non-numeric cell '" + cell + "'");
            if (i + 1 == cells.size()) target.push_back(v);
            else data.push_back(v);
        }
    }
    FeatureMatrix out(columns, ids.size());
    for (std::size_t r = 0; r < ids.size(); ++r)
        for (std::size_t c = 0; c < columns.size(); ++c)
            out.at(r, c) = data[r * columns.size() + c];
    out.target() = target;
    out.row_ids() = ids;
    out.target_name = header.back();
    if (!meta_path.empty()) {
        std::ifstream mf(meta_path);
        if (!mf) throw ConfigError("cannot open: " + meta_path);
        nlohmann::json meta = nlohmann::json::parse(mf);
        out.phase = phase_from_name(meta.at("phase").get<std::string>());
        if (meta.at("n").get<std::size_t>() != out.rows() ||
            meta.at("p").get<std::size_t>() != out.cols())
            throw DataError(meta_path + ": metadata shape disagrees with CSV");
    }
    out.validate();
    return out;
}

}  // namespace gapaudit
