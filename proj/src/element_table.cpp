#include "gapaudit/element_table.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string_view>

#include "gapaudit/errors.hpp"
#include "csv_util.hpp"

namespace gapaudit {
std::string_view embedded_element_table_csv();
}

namespace gapaudit::features {

const std::vector<std::string>& ElementTable::property_names() {
    static const std::vector<std::string> names = {"chi", "radius_pm", "ns",
                                                   "np",  "nd",        "nf"};
    return names;
}

std::optional<double> ElementProps::property(const std::string& name) const {
    if (name == "chi") return chi;
    if (name == "radius_pm") return radius_pm;
    if (name == "ns") return valence_s;
    if (name == "np") return valence_p;
    if (name == "nd") return valence_d;
    if (name == "nf") return valence_f;
    throw ConfigError("unknown elemental property '" + name + "'");
}

const ElementTable& ElementTable::embedded() {
    static const ElementTable table =
        from_csv_text(std::string(embedded_element_table_csv()));
    return table;
}

ElementTable ElementTable::from_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open element table: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_csv_text(ss.str());
}

ElementTable ElementTable::from_csv_text(const std::string& text) {
    ElementTable table;
    std::istringstream in(text);
    std::string line;
    bool header_seen = false;
    std::size_t lineno = 0;
    auto parse_num = [&](const std::string& cell) {
        double v = 0;
        auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc{} || p != cell.data() + cell.size())
            throw ParseError("element table line " + std::to_string(lineno) +
                             ": bad number '" + cell + "'");
        return v;
    };
    while (std::getline(in, line)) {
        ++lineno;
        std::string trimmed = detail::trim(line);
        if (trimmed.empty() || trimmed[0] == '#') continue;
        auto cells = detail::split_csv_line(trimmed);
        if (cells.size() != 7)
            throw ParseError("element table line " + std::to_string(lineno) +
                             ": expected 7 columns, got " + std::to_string(cells.size()));
        if (!header_seen) {
            if (cells[0] != "symbol")
                throw ParseError("element table: missing header row");
            header_seen = true;
            continue;
        }
        ElementProps props;
        props.symbol = cells[0];
        if (!cells[1].empty()) props.chi = parse_num(cells[1]);
        props.radius_pm = parse_num(cells[2]);
        props.valence_s = parse_num(cells[3]);
        props.valence_p = parse_num(cells[4]);
        props.valence_d = parse_num(cells[5]);
        props.valence_f = parse_num(cells[6]);
        if (props.symbol.empty())
            throw ParseError("element table line " + std::to_string(lineno) +
                             ": empty symbol");
        if (props.radius_pm <= 0)
            throw DataError("element " + props.symbol + ": non-positive radius");
        if (props.chi && *props.chi <= 0)
            throw DataError("element " + props.symbol + ": non-positive chi");
        if (table.find(props.symbol))
            throw DataError("element table: duplicate symbol " + props.symbol);
        table.rows_.push_back(std::move(props));
    }
    if (table.rows_.empty()) throw DataError("element table: no rows");
    return table;
}

const ElementProps* ElementTable::find(const std::string& symbol) const {
    for (const auto& row : rows_)
        if (row.symbol == symbol) return &row;
    return nullptr;
}

const ElementProps& ElementTable::require(const std::string& symbol) const {
    const ElementProps* p = find(symbol);
    if (!p) throw DataError("element '" + symbol + "' not in the property table");
    return *p;
}

}  // namespace gapaudit::features
