#include "gapaudit/formula.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "gapaudit/element_table.hpp"
#include "gapaudit/errors.hpp"

namespace gapaudit::features {

namespace {

std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
    __int128 r = static_cast<__int128>(a) * b;
    if (r > INT64_MAX || r < INT64_MIN)
        throw DataError("composition arithmetic overflow");
    return static_cast<std::int64_t>(r);
}

}  // namespace

Rational::Rational(std::int64_t n, std::int64_t d) : num(n), den(d) {
    if (den == 0) throw DataError("rational with zero denominator");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
        num /= g;
        den /= g;
    }
}

Rational Rational::operator+(const Rational& o) const {
    return Rational(checked_mul(num, o.den) + checked_mul(o.num, den),
                    checked_mul(den, o.den));
}

Rational Rational::operator*(const Rational& o) const {
    return Rational(checked_mul(num, o.num), checked_mul(den, o.den));
}

std::map<std::string, double> Composition::weights() const {
    if (amounts.empty()) throw DataError("empty composition");
    double total = 0;
    for (const auto& [sym, amt] : amounts) total += amt.value();
    std::map<std::string, double> w;
    for (const auto& [sym, amt] : amounts) w[sym] = amt.value() / total;
    return w;
}

std::map<std::string, std::int64_t> Composition::reduced() const {
    if (amounts.empty()) throw DataError("empty composition");
    std::int64_t lcm = 1;
    for (const auto& [sym, amt] : amounts)
        lcm = checked_mul(lcm / std::gcd(lcm, amt.den), amt.den);
    std::map<std::string, std::int64_t> counts;
    std::int64_t g = 0;
    for (const auto& [sym, amt] : amounts) {
        std::int64_t c = checked_mul(amt.num, lcm / amt.den);
        counts[sym] = c;
        g = std::gcd(g, c);
    }
    if (g > 1)
        for (auto& [sym, c] : counts) c /= g;
    return counts;
}

std::string Composition::reduced_key() const {
    std::string key;
    for (const auto& [sym, c] : reduced()) key += sym + std::to_string(c);
    return key;
}

const std::vector<std::string>& known_element_symbols() {
    static const std::vector<std::string> symbols = [] {
        std::vector<std::string> out;
        for (const auto& row : ElementTable::embedded().all()) out.push_back(row.symbol);
        return out;
    }();
    return symbols;
}

namespace {

struct FormulaParser {
    const std::string& text;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError("formula '" + text + "': " + what + " at position " +
                         std::to_string(pos));
    }

    bool done() const { return pos >= text.size(); }
    char peek() const { return text[pos]; }

    // Element := uppercase letter + optional lowercase letters.
    std::string element() {
        std::size_t start = pos;
        ++pos;
        while (!done() && std::islower(static_cast<unsigned char>(peek()))) ++pos;
        std::string sym = text.substr(start, pos - start);
        if (!ElementTable::embedded().find(sym)) {
            pos = start;
            fail("unknown element '" + sym + "'");
        }
        return sym;
    }

    // Count := digits ('.' digits)?; absent count means 1.
    Rational count() {
        if (done() || !std::isdigit(static_cast<unsigned char>(peek())))
            return Rational(1, 1);
        std::size_t start = pos;
        std::int64_t whole = 0;
        while (!done() && std::isdigit(static_cast<unsigned char>(peek()))) {
            whole = checked_mul(whole, 10) + (peek() - '0');
            ++pos;
        }
        std::int64_t frac = 0, scale = 1;
        if (!done() && peek() == '.') {
            ++pos;
            if (done() || !std::isdigit(static_cast<unsigned char>(peek())))
                fail("expected digits after decimal point");
            while (!done() && std::isdigit(static_cast<unsigned char>(peek()))) {
                frac = checked_mul(frac, 10) + (peek() - '0');
                scale = checked_mul(scale, 10);
                ++pos;
            }
        }
        Rational r(checked_mul(whole, scale) + frac, scale);
        if (r.num == 0) {
            pos = start;
            fail("zero count");
        }
        return r;
    }

    // Formula := (Element Count? | '(' Formula ')' Count?)+
    std::map<std::string, Rational> formula(bool nested) {
        std::map<std::string, Rational> acc;
        bool any = false;
        while (!done()) {
            char c = peek();
            if (std::isupper(static_cast<unsigned char>(c))) {
                std::string sym = element();
                Rational n = count();
                auto it = acc.find(sym);
                if (it == acc.end()) acc.emplace(sym, n);
                else it->second = it->second + n;
                any = true;
            } else if (c == '(') {
                ++pos;
                auto inner = formula(true);
                if (done() || peek() != ')') fail("unbalanced parenthesis");
                ++pos;
                Rational n = count();
                for (const auto& [sym, amt] : inner) {
                    Rational scaled = amt * n;
                    auto it = acc.find(sym);
                    if (it == acc.end()) acc.emplace(sym, scaled);
                    else it->second = it->second + scaled;
                }
                any = true;
            } else if (c == ')') {
                if (!nested) fail("unbalanced parenthesis");
                break;
            } else {
                fail(std::string("unexpected character '") + c + "'");
            }
        }
        if (!any) fail("empty group");
        return acc;
    }
};

}  // namespace

Composition parse_formula(const std::string& text) {
    if (text.empty()) throw ParseError("formula '': empty input at position 0");
    FormulaParser parser{text};
    Composition comp;
    comp.amounts = parser.formula(false);
    return comp;
}

}  // namespace gapaudit::features
