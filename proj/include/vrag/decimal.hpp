#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace vrag {

/**
 * Exact base-10 number: mantissa * 10^-scale.
 *
 * Always kept normalized (no trailing zeros in the fraction), so two
 * decimals are equal iff they denote the same rational value. Parsing
 * never goes through binary floating point.
 */
class Decimal {
public:
    constexpr Decimal() = default;

    /// Parses "[-]digits[.digits]". Throws std::invalid_argument.
    static Decimal parse(std::string_view text);
    /// Shortest round-trip decimal of a double ("0.99" for 0.99).
    static Decimal from_double(double value);
    static Decimal from_integer(std::int64_t value) { return Decimal(value, 0); }

    std::int64_t mantissa() const noexcept { return mantissa_; }
    int scale() const noexcept { return scale_; }
    bool is_integer() const noexcept { return scale_ == 0; }
    bool negative() const noexcept { return mantissa_ < 0; }

    double to_double() const;
    /// Plain text with at least `min_fraction` fractional digits.
    std::string to_string(int min_fraction = 0) const;

    friend bool operator==(const Decimal& a, const Decimal& b) noexcept {
        return a.mantissa_ == b.mantissa_ && a.scale_ == b.scale_;
    }
    friend std::strong_ordering operator<=>(const Decimal& a, const Decimal& b);

private:
    Decimal(std::int64_t mantissa, int scale);
    void normalize() noexcept;

    std::int64_t mantissa_ = 0;
    int scale_ = 0;
};

} // namespace vrag
