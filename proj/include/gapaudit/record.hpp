#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace gapaudit {

// Per-site 3x3 tensors (e.g. the electric field gradient at each atomic site).
using TensorSites = std::vector<std::array<std::array<double, 3>, 3>>;

// A descriptor value: missing, numeric, free text, or a site-tensor stack.
// Arrays that do not form a valid site-tensor stack are kept as their JSON
// text so downstream consumers can report them against the record id.
using Value = std::variant<std::monostate, double, std::string, TensorSites>;

inline bool is_missing(const Value& v) {
    return std::holds_alternative<std::monostate>(v);
}

struct RawRecord {
    std::string id;
    std::string formula;
    std::map<std::string, Value> values;

    std::optional<double> numeric(const std::string& name) const {
        auto it = values.find(name);
        if (it == values.end()) return std::nullopt;
        if (const double* d = std::get_if<double>(&it->second)) return *d;
        return std::nullopt;
    }

    std::optional<std::string> text(const std::string& name) const {
        auto it = values.find(name);
        if (it == values.end()) return std::nullopt;
        if (const std::string* s = std::get_if<std::string>(&it->second)) return *s;
        return std::nullopt;
    }

    const TensorSites* tensor(const std::string& name) const {
        auto it = values.find(name);
        if (it == values.end()) return nullptr;
        return std::get_if<TensorSites>(&it->second);
    }

    bool has(const std::string& name) const {
        auto it = values.find(name);
        return it != values.end() && !is_missing(it->second);
    }
};

// Descriptor names recognized throughout the pipeline.
namespace field {
inline constexpr const char* formation_energy = "formation_energy_per_atom";
inline constexpr const char* ehull = "ehull";
inline constexpr const char* density = "density";
inline constexpr const char* nat = "nat";
inline constexpr const char* dimensionality = "dimensionality";
inline constexpr const char* spg_number = "spg_number";
inline constexpr const char* bulk_modulus = "bulk_modulus_kv";
inline constexpr const char* shear_modulus = "shear_modulus_gv";
inline constexpr const char* poisson = "poisson";
inline constexpr const char* epsx = "epsx";
inline constexpr const char* epsy = "epsy";
inline constexpr const char* epsz = "epsz";
inline constexpr const char* max_efg = "max_efg";
inline constexpr const char* efg_tensor = "efg_tensor";
inline constexpr const char* avg_elec_mass = "avg_elec_mass";
inline constexpr const char* avg_hole_mass = "avg_hole_mass";
inline constexpr const char* bandgap = "optb88vdw_bandgap";
inline constexpr const char* is_3d = "is_3D";
}  // namespace field

// The core descriptor set a record must carry to be modeled at all.
std::vector<std::string> core_required_fields();

}  // namespace gapaudit
