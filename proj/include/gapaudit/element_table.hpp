#pragma once

#include <optional>
#include <string>
#include <vector>

namespace gapaudit::features {

struct ElementProps {
    std::string symbol;
    std::optional<double> chi;  // Pauling electronegativity; undefined for He/Ne/Ar
    double radius_pm = 0.0;     // covalent radius
    double valence_s = 0.0;
    double valence_p = 0.0;
    double valence_d = 0.0;
    double valence_f = 0.0;

    // Property value by CSV column name (chi, radius_pm, ns, np, nd, nf);
    // nullopt when undefined for this element.
    std::optional<double> property(const std::string& name) const;
};

// Immutable registry of elemental properties keyed by symbol.
class ElementTable {
public:
    // The table compiled into the binary (data/element_table.csv).
    static const ElementTable& embedded();
    // Same CSV schema loaded from a file.
    static ElementTable from_csv_file(const std::string& path);
    static ElementTable from_csv_text(const std::string& text);

    const ElementProps* find(const std::string& symbol) const;
    // Throws DataError naming the element if absent.
    const ElementProps& require(const std::string& symbol) const;
    const std::vector<ElementProps>& all() const { return rows_; }

    static const std::vector<std::string>& property_names();  // fixed order

private:
    std::vector<ElementProps> rows_;
};

}  // namespace gapaudit::features
