#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace gapaudit::features {

// Exact element amount as a rational so reduced compositions are canonical.
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    Rational() = default;
    Rational(std::int64_t n, std::int64_t d);
    Rational operator+(const Rational& o) const;
    Rational operator*(const Rational& o) const;
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

struct Composition {
    std::map<std::string, Rational> amounts;  // element symbol -> amount > 0

    // Fractional weights w_e summing to 1.
    std::map<std::string, double> weights() const;
    // Integer element ratios normalized by gcd, e.g. Si2O4 -> {O:2, Si:1}.
    std::map<std::string, std::int64_t> reduced() const;
    // Canonical key for the reduced composition ("O2Si1").
    std::string reduced_key() const;
};

// Grammar: Formula := (Element Count? | '(' Formula ')' Count?)+
//          Element := uppercase letter + optional lowercase letters
//          Count   := decimal number (integers or fractions like 0.5)
// Amounts accumulate across repeated symbols. Unknown element symbols,
// empty input and unbalanced parentheses raise ParseError with a position.
Composition parse_formula(const std::string& text);

// Symbols accepted by the parser (the embedded table, Z = 1..94).
const std::vector<std::string>& known_element_symbols();

}  // namespace gapaudit::features
