#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace gapaudit {

enum class Phase { I, II, III };

std::string phase_name(Phase p);
Phase phase_from_name(const std::string& s);

// Dense named feature matrix with an aligned target vector. The unit of
// exchange between featurization, selection, training and auditing.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(std::vector<std::string> column_names, std::size_t n_rows);

    std::size_t rows() const { return n_; }
    std::size_t cols() const { return column_names_.size(); }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    const double* row(std::size_t r) const { return data_.data() + r * cols(); }
    std::vector<double> column(std::size_t c) const;

    const std::vector<std::string>& column_names() const { return column_names_; }
    // Index of a named column, or -1.
    int column_index(const std::string& name) const;

    std::vector<double>& target() { return target_; }
    const std::vector<double>& target() const { return target_; }

    std::vector<std::string>& row_ids() { return row_ids_; }
    const std::vector<std::string>& row_ids() const { return row_ids_; }

    Phase phase = Phase::I;
    std::string target_name = "optb88vdw_bandgap";

    // New matrix with the given columns (by index), same rows/target/ids.
    FeatureMatrix select_columns(const std::vector<std::size_t>& keep) const;
    FeatureMatrix select_columns_by_name(const std::vector<std::string>& names) const;
    FeatureMatrix drop_columns_by_name(const std::vector<std::string>& names) const;
    // Appends a column; length must equal rows().
    void append_column(const std::string& name, const std::vector<double>& values);
    // New matrix restricted to the given rows (indices into this matrix).
    FeatureMatrix select_rows(const std::vector<std::size_t>& keep) const;

    // Every entry and target finite, names unique, sizes consistent.
    void validate() const;

private:
    std::vector<std::string> column_names_;
    std::vector<double> data_;  // row-major n_ x cols()
    std::vector<double> target_;
    std::vector<std::string> row_ids_;
    std::size_t n_ = 0;
};

// CSV round-trip: header row_id,<columns...>,<target_name>; plus a JSON
// metadata sidecar {phase, n, p, column_names, target_name}.
void write_matrix_csv(const FeatureMatrix& m, const std::string& csv_path,
                      const std::string& meta_path = "");
FeatureMatrix read_matrix_csv(const std::string& csv_path,
                              const std::string& meta_path = "");

}  // namespace gapaudit
