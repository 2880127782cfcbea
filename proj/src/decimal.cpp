#include "vrag/decimal.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <system_error>

namespace vrag {

namespace {

constexpr int kMaxScale = 18;

__int128 pow10(int n) {
    __int128 r = 1;
    while (n-- > 0) r *= 10;
    return r;
}

std::int64_t checked(__int128 v) {
    if (v > std::numeric_limits<std::int64_t>::max() || v < std::numeric_limits<std::int64_t>::min())
        throw std::invalid_argument("decimal out of range");
    return static_cast<std::int64_t>(v);
}

} // namespace

Decimal::Decimal(std::int64_t mantissa, int scale) : mantissa_(mantissa), scale_(scale) { normalize(); }

void Decimal::normalize() noexcept {
    if (mantissa_ == 0) {
        scale_ = 0;
        return;
    }
    while (scale_ > 0 && mantissa_ % 10 == 0) {
        mantissa_ /= 10;
        --scale_;
    }
}

Decimal Decimal::parse(std::string_view text) {
    std::size_t i = 0;
    bool neg = false;
    if (i < text.size() && (text[i] == '+' || text[i] == '-')) neg = text[i++] == '-';

    __int128 mant = 0;
    int scale = 0;
    int digits = 0;
    bool seen_dot = false;
    for (; i < text.size(); ++i) {
        char c = text[i];
        if (c == '.') {
            if (seen_dot) throw std::invalid_argument("bad decimal: " + std::string(text));
            seen_dot = true;
            continue;
        }
        if (c < '0' || c > '9') break;
        mant = mant * 10 + (c - '0');
        if (mant != 0) ++digits;
        if (digits > 18) throw std::invalid_argument("too many digits: " + std::string(text));
        if (seen_dot) ++scale;
    }
    bool any_digit = false;
    for (char c : text.substr(0, i))
        if (c >= '0' && c <= '9') any_digit = true;
    if (!any_digit) throw std::invalid_argument("bad decimal: " + std::string(text));

    if (i < text.size() && (text[i] == 'e' || text[i] == 'E')) {
        int exponent = 0;
        auto first = text.data() + i + 1;
        if (first < text.data() + text.size() && *first == '+') ++first;
        auto [ptr, ec] = std::from_chars(first, text.data() + text.size(), exponent);
        if (ec != std::errc{} || ptr != text.data() + text.size())
            throw std::invalid_argument("bad exponent: " + std::string(text));
        scale -= exponent;
        i = text.size();
    }
    if (i != text.size()) throw std::invalid_argument("bad decimal: " + std::string(text));

    if (scale < 0) {
        if (-scale > 18) throw std::invalid_argument("decimal out of range");
        mant *= pow10(-scale);
        scale = 0;
    }
    // Trailing zeros may push the raw scale past the limit; strip before checking.
    while (scale > kMaxScale && mant % 10 == 0) {
        mant /= 10;
        --scale;
    }
    if (scale > kMaxScale) throw std::invalid_argument("decimal out of range");
    return Decimal(checked(neg ? -mant : mant), scale);
}

Decimal Decimal::from_double(double value) {
    if (!std::isfinite(value)) throw std::invalid_argument("non-finite decimal");
    char buf[512];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed);
    if (ec != std::errc{}) throw std::invalid_argument("decimal out of range");
    return parse(std::string_view(buf, static_cast<std::size_t>(ptr - buf)));
}

double Decimal::to_double() const {
    double r = 0;
    std::string s = to_string();
    std::from_chars(s.data(), s.data() + s.size(), r);
    return r;
}

std::string Decimal::to_string(int min_fraction) const {
    int frac = std::max(scale_, min_fraction);
    __int128 m = mantissa_;
    m *= pow10(frac - scale_);
    bool neg = m < 0;
    if (neg) m = -m;
    std::string digits;
    do {
        digits.insert(digits.begin(), static_cast<char>('0' + static_cast<int>(m % 10)));
        m /= 10;
    } while (m != 0);
    if (static_cast<int>(digits.size()) <= frac) digits.insert(0, static_cast<std::size_t>(frac) + 1 - digits.size(), '0');
    if (frac > 0) digits.insert(digits.size() - static_cast<std::size_t>(frac), ".");
    return neg ? "-" + digits : digits;
}

std::strong_ordering operator<=>(const Decimal& a, const Decimal& b) {
    int s = std::max(a.scale_, b.scale_);
    __int128 x = static_cast<__int128>(a.mantissa_) * pow10(s - a.scale_);
    __int128 y = static_cast<__int128>(b.mantissa_) * pow10(s - b.scale_);
    return x <=> y;
}

} // namespace vrag
