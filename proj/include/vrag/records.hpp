#pragma once

#include "vrag/decimal.hpp"
#include "vrag/gtin.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vrag {

enum class DifferentSorts { yes, no, unknown };

std::string_view to_string(DifferentSorts s) noexcept;
/// "yes"/"no" (case-insensitive) map directly; anything else is unknown.
DifferentSorts parse_different_sorts(std::string_view text) noexcept;

/// Unit of a product weight. Known units are stored by their canonical
/// spelling; anything else is kept as trimmed free text.
class WeightUnit {
public:
    enum class Kind { gramm, kilogramm, milliliter, liter, stueck, other };

    WeightUnit() = default;

    static WeightUnit parse(std::string_view text);

    Kind kind() const noexcept { return kind_; }
    /// "Gramm", "Kilogramm", "Milliliter", "Liter", "Stueck" or the free text.
    const std::string& name() const noexcept { return name_; }

    friend bool operator==(const WeightUnit& a, const WeightUnit& b) noexcept {
        return a.kind_ == b.kind_ && a.name_ == b.name_;
    }

private:
    WeightUnit(Kind kind, std::string name) : kind_(kind), name_(std::move(name)) {}

    Kind kind_ = Kind::other;
    std::string name_;
};

struct Weight {
    Decimal number;
    WeightUnit unit;

    friend bool operator==(const Weight&, const Weight&) = default;
};

struct ProductRecord {
    std::optional<std::string> brand;
    std::vector<std::string> product_category;
    std::vector<Gtin> gtins;
    std::optional<Weight> weight;
    DifferentSorts different_sorts = DifferentSorts::unknown;

    friend bool operator==(const ProductRecord&, const ProductRecord&) = default;
};

/// Absent values are the dataset's "NaN"; they are never stored as zero.
struct PromotionRecord {
    std::optional<Decimal> price;
    std::optional<Decimal> regular_price;
    std::optional<std::int64_t> relative_discount;
    std::optional<Decimal> absolute_discount;

    friend bool operator==(const PromotionRecord&, const PromotionRecord&) = default;
};

/// Structured model output; one field per target, every field optional.
struct Prediction {
    std::optional<std::string> brand;
    std::optional<Decimal> price;
    std::optional<Decimal> regular_price;
    std::optional<std::int64_t> relative_discount;
    std::optional<Decimal> absolute_discount;
    std::vector<std::string> product_category;
    std::vector<Gtin> gtins;
    std::optional<Decimal> weight_number;
    std::optional<WeightUnit> weight_unit;
    std::optional<DifferentSorts> different_sorts;

    bool all_null() const noexcept;

    /// Prediction that restates a ground-truth pair field for field.
    static Prediction from_records(const ProductRecord& product, const PromotionRecord& promotion);

    friend bool operator==(const Prediction&, const Prediction&) = default;
};

/// Field names of the structured output, in schema order.
inline constexpr std::string_view kPredictionFields[] = {
    "brand",           "price",   "regular_price", "relative_discount", "absolute_discount",
    "product_category", "GTINs",  "weight_number", "weight_unit",       "different_sorts",
};

// JSON forms. Readers accept null and the string "NaN" as absent, numbers
// either as JSON numbers or as decimal strings, and GTINs as strings or
// integers. Malformed values throw SchemaError.

nlohmann::json to_json(const Prediction& p);
Prediction prediction_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ProductRecord& r);
ProductRecord product_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PromotionRecord& r);
PromotionRecord promotion_from_json(const nlohmann::json& j);

/// Structured-output descriptor sent alongside a completion request.
nlohmann::json prediction_schema();

/// Parses the attribute listing form a pydantic model prints, e.g.
///   brand='Lorenz'
///   price=0.99
///   GTINs=['04018077683015',
///          '04018077686719']
/// `None` means absent. Throws SchemaError on anything it cannot read.
Prediction parse_prediction_listing(std::string_view text);

/// JSON object first, attribute listing second; SchemaError if neither parses.
Prediction parse_prediction(std::string_view text);

} // namespace vrag
