#pragma once

#include <cstdint>
#include <numeric>
#include <string>

#include "stsm/errors.hpp"

namespace stsm {

// Exact rational in lowest terms. Channel-partition arithmetic must be exact
// (e.g. 3/8 of 64 channels), so fractions are never round-tripped through
// floating point.
struct Fraction {
    std::int64_t num = 0;
    std::int64_t den = 1;

    Fraction() = default;
    Fraction(std::int64_t n, std::int64_t d) : num(n), den(d) {
        if (den == 0) throw ConfigError("fraction with zero denominator");
        if (den < 0) { num = -num; den = -den; }
        const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) { num /= g; den /= g; }
    }

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }

    bool operator==(const Fraction& o) const { return num == o.num && den == o.den; }

    std::string str() const {
        if (den == 1) return std::to_string(num);
        return std::to_string(num) + "/" + std::to_string(den);
    }

    // Accepts "3/8", "1", "0.375". Decimals are scaled exactly by powers of ten.
    static Fraction parse(const std::string& text);
};

}  // namespace stsm
