#include "vrag/gtin.hpp"

#include "vrag/errors.hpp"

#include <algorithm>

namespace vrag {

namespace {

bool all_digits(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string_view trim(std::string_view s) {
    auto space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
    while (!s.empty() && space(s.front())) s.remove_prefix(1);
    while (!s.empty() && space(s.back())) s.remove_suffix(1);
    return s;
}

} // namespace

int gtin_check_digit(std::string_view first13) {
    if (first13.size() != 13 || !all_digits(first13))
        throw InvalidGtin("check digit needs 13 decimal digits, got '" + std::string(first13) + "'");
    int sum = 0;
    for (std::size_t i = 0; i < 13; ++i) sum += (first13[i] - '0') * (i % 2 == 0 ? 3 : 1);
    return (10 - sum % 10) % 10;
}

Gtin Gtin::normalize(std::string_view raw) {
    auto s = trim(raw);
    if (s.empty() || !all_digits(s)) throw InvalidGtin("GTIN must be decimal digits: '" + std::string(raw) + "'");
    if (s.size() > 14) throw InvalidGtin("GTIN longer than 14 digits: '" + std::string(raw) + "'");
    std::string digits(14 - s.size(), '0');
    digits.append(s);
    bool ok = gtin_check_digit(std::string_view(digits).substr(0, 13)) == digits[13] - '0';
    return Gtin(std::move(digits), ok);
}

} // namespace vrag
