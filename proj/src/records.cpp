#include "vrag/records.hpp"

#include "vrag/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace vrag {

using nlohmann::json;

namespace {

std::string trimmed(std::string_view s) {
    auto space = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool is_missing_token(std::string_view s) {
    auto l = lower(trimmed(s));
    return l.empty() || l == "nan" || l == "none" || l == "null";
}

bool absent(const json& j) { return j.is_null() || (j.is_string() && is_missing_token(j.get_ref<const std::string&>())); }

const json* field(const json& obj, std::string_view key) {
    auto it = obj.find(key);
    if (it == obj.end() || absent(*it)) return nullptr;
    return &*it;
}

std::optional<std::string> opt_string(const json& obj, std::string_view key) {
    const json* v = field(obj, key);
    if (!v) return std::nullopt;
    if (!v->is_string()) throw SchemaError(std::string(key) + ": expected a string");
    return trimmed(v->get_ref<const std::string&>());
}

std::optional<Decimal> opt_decimal(const json& obj, std::string_view key) {
    const json* v = field(obj, key);
    if (!v) return std::nullopt;
    try {
        if (v->is_number_integer()) return Decimal::from_integer(v->get<std::int64_t>());
        if (v->is_number_float()) return Decimal::from_double(v->get<double>());
        if (v->is_string()) return Decimal::parse(trimmed(v->get_ref<const std::string&>()));
    } catch (const std::invalid_argument& e) {
        throw SchemaError(std::string(key) + ": " + e.what());
    }
    throw SchemaError(std::string(key) + ": expected a number");
}

std::optional<std::int64_t> opt_integer(const json& obj, std::string_view key) {
    auto d = opt_decimal(obj, key);
    if (!d) return std::nullopt;
    if (!d->is_integer()) throw SchemaError(std::string(key) + ": expected an integer, got " + d->to_string());
    return d->mantissa();
}

std::vector<std::string> string_list(const json& obj, std::string_view key) {
    std::vector<std::string> out;
    const json* v = field(obj, key);
    if (!v) return out;
    auto push = [&](const json& e) {
        if (absent(e)) return;
        if (!e.is_string()) throw SchemaError(std::string(key) + ": expected strings");
        auto s = trimmed(e.get_ref<const std::string&>());
        if (!s.empty()) out.push_back(std::move(s));
    };
    if (v->is_array())
        for (const auto& e : *v) push(e);
    else
        push(*v);
    return out;
}

std::vector<Gtin> gtin_list(const json& obj, std::string_view key) {
    std::vector<Gtin> out;
    const json* v = field(obj, key);
    if (!v) return out;
    auto push = [&](const json& e) {
        if (absent(e)) return;
        try {
            if (e.is_string())
                out.push_back(Gtin::normalize(e.get_ref<const std::string&>()));
            else if (e.is_number_unsigned() || e.is_number_integer())
                out.push_back(Gtin::normalize(std::to_string(e.get<std::uint64_t>())));
            else
                throw SchemaError(std::string(key) + ": expected GTIN strings");
        } catch (const InvalidGtin& err) {
            throw SchemaError(std::string(key) + ": " + err.what());
        }
    };
    if (v->is_array())
        for (const auto& e : *v) push(e);
    else
        push(*v);
    return out;
}

std::optional<DifferentSorts> opt_sorts(const json& obj, std::string_view key) {
    const json* v = field(obj, key);
    if (!v) return std::nullopt;
    if (v->is_boolean()) return v->get<bool>() ? DifferentSorts::yes : DifferentSorts::no;
    if (!v->is_string()) throw SchemaError(std::string(key) + ": expected a string");
    return parse_different_sorts(v->get_ref<const std::string&>());
}

json decimal_json(const std::optional<Decimal>& d) {
    if (!d) return nullptr;
    return d->to_double();
}

json gtins_json(const std::vector<Gtin>& gtins) {
    json arr = json::array();
    for (const auto& g : gtins) arr.push_back(g.digits());
    return arr;
}

void require_object(const json& j, const char* what) {
    if (!j.is_object()) throw SchemaError(std::string(what) + " must be a JSON object");
}

} // namespace

std::string_view to_string(DifferentSorts s) noexcept {
    switch (s) {
    case DifferentSorts::yes: return "yes";
    case DifferentSorts::no: return "no";
    case DifferentSorts::unknown: break;
    }
    return "unknown";
}

DifferentSorts parse_different_sorts(std::string_view text) noexcept {
    auto l = lower(trimmed(text));
    if (l == "yes") return DifferentSorts::yes;
    if (l == "no") return DifferentSorts::no;
    return DifferentSorts::unknown;
}

WeightUnit WeightUnit::parse(std::string_view text) {
    auto t = trimmed(text);
    auto l = lower(t);
    if (l == "gramm" || l == "g") return {Kind::gramm, "Gramm"};
    if (l == "kilogramm" || l == "kg") return {Kind::kilogramm, "Kilogramm"};
    if (l == "milliliter" || l == "ml") return {Kind::milliliter, "Milliliter"};
    if (l == "liter" || l == "l") return {Kind::liter, "Liter"};
    if (l == "stueck" || l == "stück" || l == "stk") return {Kind::stueck, "Stueck"};
    return {Kind::other, t};
}

bool Prediction::all_null() const noexcept {
    return !brand && !price && !regular_price && !relative_discount && !absolute_discount &&
           product_category.empty() && gtins.empty() && !weight_number && !weight_unit && !different_sorts;
}

Prediction Prediction::from_records(const ProductRecord& product, const PromotionRecord& promotion) {
    Prediction p;
    p.brand = product.brand;
    p.price = promotion.price;
    p.regular_price = promotion.regular_price;
    p.relative_discount = promotion.relative_discount;
    p.absolute_discount = promotion.absolute_discount;
    p.product_category = product.product_category;
    p.gtins = product.gtins;
    if (product.weight) {
        p.weight_number = product.weight->number;
        p.weight_unit = product.weight->unit;
    }
    if (product.different_sorts != DifferentSorts::unknown) p.different_sorts = product.different_sorts;
    return p;
}

json to_json(const Prediction& p) {
    json j = json::object();
    j["brand"] = p.brand ? json(*p.brand) : json(nullptr);
    j["price"] = decimal_json(p.price);
    j["regular_price"] = decimal_json(p.regular_price);
    j["relative_discount"] = p.relative_discount ? json(*p.relative_discount) : json(nullptr);
    j["absolute_discount"] = decimal_json(p.absolute_discount);
    j["product_category"] = p.product_category;
    j["GTINs"] = gtins_json(p.gtins);
    j["weight_number"] = decimal_json(p.weight_number);
    j["weight_unit"] = p.weight_unit ? json(p.weight_unit->name()) : json(nullptr);
    j["different_sorts"] = p.different_sorts ? json(std::string(to_string(*p.different_sorts))) : json(nullptr);
    return j;
}

Prediction prediction_from_json(const json& j) {
    require_object(j, "prediction");
    Prediction p;
    p.brand = opt_string(j, "brand");
    p.price = opt_decimal(j, "price");
    p.regular_price = opt_decimal(j, "regular_price");
    p.relative_discount = opt_integer(j, "relative_discount");
    p.absolute_discount = opt_decimal(j, "absolute_discount");
    p.product_category = string_list(j, "product_category");
    p.gtins = gtin_list(j, "GTINs");
    p.weight_number = opt_decimal(j, "weight_number");
    if (auto u = opt_string(j, "weight_unit")) p.weight_unit = WeightUnit::parse(*u);
    p.different_sorts = opt_sorts(j, "different_sorts");
    return p;
}

json to_json(const ProductRecord& r) {
    json j = json::object();
    j["brand"] = r.brand ? json(*r.brand) : json(nullptr);
    j["product_category"] = r.product_category;
    j["GTINs"] = gtins_json(r.gtins);
    j["weight_number"] = r.weight ? json(r.weight->number.to_double()) : json(nullptr);
    j["weight_unit"] = r.weight ? json(r.weight->unit.name()) : json(nullptr);
    j["different_sorts"] = std::string(to_string(r.different_sorts));
    return j;
}

ProductRecord product_from_json(const json& j) {
    require_object(j, "product");
    ProductRecord r;
    r.brand = opt_string(j, "brand");
    r.product_category = string_list(j, "product_category");
    r.gtins = gtin_list(j, "GTINs");
    if (auto n = opt_decimal(j, "weight_number")) {
        if (n->negative()) throw SchemaError("weight_number must be >= 0");
        auto unit = opt_string(j, "weight_unit");
        r.weight = Weight{*n, WeightUnit::parse(unit.value_or(""))};
    }
    r.different_sorts = opt_sorts(j, "different_sorts").value_or(DifferentSorts::unknown);
    return r;
}

json to_json(const PromotionRecord& r) {
    json j = json::object();
    j["price"] = decimal_json(r.price);
    j["regular_price"] = decimal_json(r.regular_price);
    j["relative_discount"] = r.relative_discount ? json(*r.relative_discount) : json(nullptr);
    j["absolute_discount"] = decimal_json(r.absolute_discount);
    return j;
}

PromotionRecord promotion_from_json(const json& j) {
    require_object(j, "promotion");
    PromotionRecord r;
    r.price = opt_decimal(j, "price");
    r.regular_price = opt_decimal(j, "regular_price");
    r.relative_discount = opt_integer(j, "relative_discount");
    r.absolute_discount = opt_decimal(j, "absolute_discount");
    auto negative = [](const std::optional<Decimal>& d) { return d && d->negative(); };
    if (negative(r.price) || negative(r.regular_price) || negative(r.absolute_discount) ||
        (r.relative_discount && *r.relative_discount < 0))
        throw SchemaError("promotion values must be >= 0");
    return r;
}

json prediction_schema() {
    auto nullable = [](const char* type) { return json{{"type", json::array({type, "null"})}}; };
    auto list = [] { return json{{"type", "array"}, {"items", {{"type", "string"}}}}; };
    json props = {
        {"brand", nullable("string")},
        {"price", nullable("number")},
        {"regular_price", nullable("number")},
        {"relative_discount", nullable("integer")},
        {"absolute_discount", nullable("number")},
        {"product_category", list()},
        {"GTINs", list()},
        {"weight_number", nullable("number")},
        {"weight_unit", nullable("string")},
        {"different_sorts", {{"type", json::array({"string", "null"})}, {"enum", json::array({"yes", "no", nullptr})}}},
    };
    json required = json::array();
    for (auto f : kPredictionFields) required.push_back(std::string(f));
    return {{"name", "Prediction"},
            {"type", "object"},
            {"properties", props},
            {"required", required},
            {"additionalProperties", false}};
}

// --- attribute listing --------------------------------------------------------

namespace {

class ListingReader {
public:
    explicit ListingReader(std::string_view text) : s_(text) {}

    json read_all() {
        json obj = json::object();
        skip_space();
        while (pos_ < s_.size()) {
            std::string key = read_ident();
            skip_space();
            expect('=');
            skip_space();
            obj[key] = read_value();
            skip_space();
        }
        if (obj.empty()) fail("no attributes");
        return obj;
    }

private:
    [[noreturn]] void fail(const std::string& why) const {
        throw SchemaError("unreadable attribute listing at offset " + std::to_string(pos_) + ": " + why);
    }

    void skip_space() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    void expect(char c) {
        if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    std::string read_ident() {
        std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
        if (start == pos_) fail("expected attribute name");
        return std::string(s_.substr(start, pos_ - start));
    }

    std::string read_quoted() {
        char q = s_[pos_++];
        std::string out;
        while (pos_ < s_.size() && s_[pos_] != q) {
            if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) ++pos_;
            out.push_back(s_[pos_++]);
        }
        expect(q);
        return out;
    }

    json read_value() {
        if (pos_ >= s_.size()) fail("missing value");
        char c = s_[pos_];
        if (c == '\'' || c == '"') return read_quoted();
        if (c == '[') {
            ++pos_;
            json arr = json::array();
            skip_space();
            if (pos_ < s_.size() && s_[pos_] == ']') {
                ++pos_;
                return arr;
            }
            for (;;) {
                skip_space();
                arr.push_back(read_value());
                skip_space();
                if (pos_ < s_.size() && s_[pos_] == ',') {
                    ++pos_;
                    continue;
                }
                expect(']');
                return arr;
            }
        }
        if (c == '<') {
            // Enum repr such as <WeightUnit.Gramm: 'Gramm'>.
            auto close = s_.find('>', pos_);
            if (close == std::string_view::npos) fail("unterminated enum repr");
            auto inner = s_.substr(pos_, close - pos_);
            pos_ = close + 1;
            auto q = inner.find_first_of("'\"");
            if (q == std::string_view::npos) fail("enum repr without value");
            auto end = inner.find(inner[q], q + 1);
            if (end == std::string_view::npos) fail("enum repr without value");
            return std::string(inner.substr(q + 1, end - q - 1));
        }
        std::size_t start = pos_;
        while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_])) && s_[pos_] != ',' &&
               s_[pos_] != ']')
            ++pos_;
        std::string token(s_.substr(start, pos_ - start));
        if (token.empty()) fail("empty value");
        if (token == "None") return nullptr;
        if (token == "True") return true;
        if (token == "False") return false;
        return token;
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

} // namespace

Prediction parse_prediction_listing(std::string_view text) {
    return prediction_from_json(ListingReader(text).read_all());
}

Prediction parse_prediction(std::string_view text) {
    auto t = trimmed(text);
    if (!t.empty() && t.front() == '{') {
        json j = json::parse(t, nullptr, false);
        if (j.is_discarded()) throw SchemaError("response is not valid JSON");
        return prediction_from_json(j);
    }
    return parse_prediction_listing(t);
}

} // namespace vrag
