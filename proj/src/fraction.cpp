#include "stsm/fraction.hpp"

#include <cctype>
#include <cstdlib>

namespace stsm {

namespace {

std::int64_t parse_int(const std::string& s) {
    if (s.empty()) throw ConfigError("empty number in fraction");
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &pos);
    } catch (const std::exception&) {
        throw ConfigError("bad number in fraction: '" + s + "'");
    }
    if (pos != s.size()) throw ConfigError("bad number in fraction: '" + s + "'");
    return static_cast<std::int64_t>(v);
}

}  // namespace

Fraction Fraction::parse(const std::string& text) {
    const auto slash = text.find('/');
    if (slash != std::string::npos) {
        return Fraction(parse_int(text.substr(0, slash)), parse_int(text.substr(slash + 1)));
    }
    const auto point = text.find('.');
    if (point != std::string::npos) {
        const std::string whole = text.substr(0, point);
        const std::string frac = text.substr(point + 1);
        if (frac.size() > 15) throw ConfigError("decimal fraction too long: '" + text + "'");
        for (char ch : frac) {
            if (!std::isdigit(static_cast<unsigned char>(ch)))
                throw ConfigError("bad decimal fraction: '" + text + "'");
        }
        std::int64_t den = 1;
        for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
        const bool neg = !whole.empty() && whole[0] == '-';
        const std::int64_t w = whole.empty() || whole == "-" ? 0 : parse_int(whole);
        const std::int64_t f = frac.empty() ? 0 : parse_int(frac);
        const std::int64_t num = w * den + (neg ? -f : f);
        return Fraction(num, den);
    }
    return Fraction(parse_int(text), 1);
}

}  // namespace stsm
