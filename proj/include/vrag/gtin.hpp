#pragma once

#include <compare>
#include <functional>
#include <string>
#include <string_view>

namespace vrag {

/// GS1 mod-10 check digit for a 13-digit prefix; weights 3,1,3,... from the left.
/// Throws InvalidGtin unless `first13` is exactly 13 decimal digits.
int gtin_check_digit(std::string_view first13);

/// A Global Trade Item Number in its 14-digit form.
///
/// Construction never rejects a bad check digit; `check_ok()` reports it so
/// imperfect ground-truth data can still be stored and compared.
class Gtin {
public:
    /// Trims whitespace, rejects non-digits and lengths above 14, left-pads to 14.
    static Gtin normalize(std::string_view raw);

    const std::string& digits() const noexcept { return digits_; }
    bool check_ok() const noexcept { return check_ok_; }

    friend bool operator==(const Gtin& a, const Gtin& b) noexcept { return a.digits_ == b.digits_; }
    friend std::strong_ordering operator<=>(const Gtin& a, const Gtin& b) noexcept {
        return a.digits_ <=> b.digits_;
    }

private:
    Gtin(std::string digits, bool check_ok) : digits_(std::move(digits)), check_ok_(check_ok) {}

    std::string digits_;
    bool check_ok_ = false;
};

inline Gtin normalize_gtin(std::string_view raw) { return Gtin::normalize(raw); }

} // namespace vrag

template <>
struct std::hash<vrag::Gtin> {
    std::size_t operator()(const vrag::Gtin& g) const noexcept { return std::hash<std::string>{}(g.digits()); }
};
