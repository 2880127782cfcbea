#include "vrag/eval.hpp"

#include "vrag/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace vrag::eval {

using nlohmann::json;

std::string_view to_string(MatchRule r) noexcept {
    switch (r) {
    case MatchRule::substring: return "substring";
    case MatchRule::exact: return "exact";
    case MatchRule::gtin_exact_set: return "gtin_exact_set";
    case MatchRule::gtin_union_membership: return "gtin_union_membership";
    case MatchRule::gtin_any_match: break;
    }
    return "gtin_any_match";
}

std::string_view to_string(GtinRule r) noexcept {
    switch (r) {
    case GtinRule::exact_set: return "exact_set";
    case GtinRule::union_membership: return "union";
    case GtinRule::any_match: break;
    }
    return "any";
}

GtinRule parse_gtin_rule(std::string_view text) {
    if (text == "exact_set" || text == "exact") return GtinRule::exact_set;
    if (text == "union" || text == "union_membership") return GtinRule::union_membership;
    if (text == "any" || text == "any_match") return GtinRule::any_match;
    throw ConfigError("unknown GTIN metric \"" + std::string(text) + "\" (exact_set, union, any)");
}

namespace {

std::string fold(std::string_view s) {
    std::string out;
    bool space = false;
    for (char c : s) {
        auto u = static_cast<unsigned char>(c);
        if (std::isspace(u)) {
            space = !out.empty();
            continue;
        }
        if (space) out.push_back(' ');
        space = false;
        out.push_back(static_cast<char>(std::tolower(u)));
    }
    return out;
}

std::set<Gtin> as_set(std::span<const Gtin> gtins) { return {gtins.begin(), gtins.end()}; }

MatchRule match_rule_for(GtinRule r) {
    switch (r) {
    case GtinRule::exact_set: return MatchRule::gtin_exact_set;
    case GtinRule::union_membership: return MatchRule::gtin_union_membership;
    case GtinRule::any_match: break;
    }
    return MatchRule::gtin_any_match;
}

bool substring_target(const std::vector<std::string>& predicted, const std::vector<std::string>& gt) {
    if (predicted.empty()) return gt.empty();
    return std::all_of(predicted.begin(), predicted.end(),
                       [&](const std::string& p) { return match_substring(p, gt); });
}

std::vector<std::string> as_list(const std::optional<std::string>& s) {
    if (!s || s->empty()) return {};
    return {*s};
}

} // namespace

bool match_substring(std::string_view predicted, std::span<const std::string> gt_values) {
    auto p = fold(predicted);
    if (p.empty()) return false;
    return std::any_of(gt_values.begin(), gt_values.end(),
                       [&](const std::string& g) { return fold(g).find(p) != std::string::npos; });
}

bool match_gtin_exact_set(std::span<const Gtin> predicted, std::span<const Gtin> gt) {
    return as_set(predicted) == as_set(gt);
}

bool match_gtin_union(std::span<const Gtin> predicted, const std::set<Gtin>& class_union) {
    if (predicted.empty()) return false;
    return std::all_of(predicted.begin(), predicted.end(), [&](const Gtin& g) { return class_union.contains(g); });
}

bool match_gtin_any(std::span<const Gtin> predicted, std::span<const Gtin> gt) {
    auto gt_set = as_set(gt);
    return std::any_of(predicted.begin(), predicted.end(), [&](const Gtin& g) { return gt_set.contains(g); });
}

const TargetScore* TargetScorecard::find(std::string_view target) const {
    auto it = std::find_if(targets.begin(), targets.end(), [&](const TargetScore& t) { return t.target == target; });
    return it == targets.end() ? nullptr : &*it;
}

std::vector<bool> score_item(const Prediction& p, const DatasetItem& item, const Dataset& dataset,
                             const ScoringRules& rules) {
    const auto& gt = item.product;
    const auto& promo = item.promotion;

    bool gtins = false;
    switch (rules.gtin) {
    case GtinRule::exact_set: gtins = match_gtin_exact_set(p.gtins, gt.gtins); break;
    case GtinRule::union_membership: gtins = match_gtin_union(p.gtins, dataset.class_gtin_union(item.label)); break;
    case GtinRule::any_match: gtins = match_gtin_any(p.gtins, gt.gtins); break;
    }

    std::optional<Weight> predicted_weight;
    if (p.weight_number) predicted_weight = Weight{*p.weight_number, p.weight_unit.value_or(WeightUnit{})};
    const auto gt_sorts = gt.different_sorts == DifferentSorts::unknown ? std::nullopt
                                                                         : std::optional<DifferentSorts>(gt.different_sorts);
    std::optional<DifferentSorts> predicted_sorts = p.different_sorts;
    if (predicted_sorts == DifferentSorts::unknown) predicted_sorts.reset();

    return {
        substring_target(as_list(p.brand), as_list(gt.brand)),
        substring_target(p.product_category, gt.product_category),
        match_exact(predicted_weight, gt.weight),
        gtins,
        match_exact(predicted_sorts, gt_sorts),
        match_exact(p.price, promo.price),
        match_exact(p.regular_price, promo.regular_price),
        match_exact(p.relative_discount, promo.relative_discount),
        match_exact(p.absolute_discount, promo.absolute_discount),
    };
}

TargetScorecard score_run(std::span<const ItemResult> traces, const Dataset& dataset, const ScoringRules& rules) {
    TargetScorecard card;
    for (auto t : kTargets) {
        MatchRule rule = MatchRule::exact;
        if (t == "brand" || t == "product_category") rule = MatchRule::substring;
        if (t == "GTINs") rule = match_rule_for(rules.gtin);
        card.targets.push_back({std::string(t), 0, 0, rule});
    }
    std::unordered_set<std::string> seen;
    for (const auto& trace : traces) {
        const DatasetItem* item = dataset.find(trace.item_id);
        if (!item) throw EvalError("trace for unknown item \"" + trace.item_id + "\"");
        if (item->split != Split::test) throw EvalError("trace for non-test item \"" + trace.item_id + "\"");
        if (!seen.insert(trace.item_id).second) throw EvalError("duplicate trace for \"" + trace.item_id + "\"");
        std::vector<bool> verdicts(card.targets.size(), false);
        if (trace.ok()) verdicts = score_item(trace.trace->prediction, *item, dataset, rules);
        for (std::size_t i = 0; i < card.targets.size(); ++i) {
            ++card.targets[i].n_total;
            if (verdicts[i]) ++card.targets[i].n_correct;
        }
    }
    return card;
}

CostReport cost_report(std::span<const TraceCost> traces, const PriceTable& prices) {
    if (prices.per_input_token < 0 || prices.per_output_token < 0) throw std::invalid_argument("prices must be >= 0");
    CostReport r;
    r.prices = prices;
    r.n_traces = traces.size();
    if (traces.empty()) return r;
    double in = 0, out = 0, secs = 0;
    for (const auto& t : traces) {
        in += static_cast<double>(t.input_tokens);
        out += static_cast<double>(t.output_tokens);
        secs += t.elapsed_seconds;
        r.total_cost += static_cast<double>(t.input_tokens) * prices.per_input_token +
                        static_cast<double>(t.output_tokens) * prices.per_output_token;
    }
    const auto n = static_cast<double>(traces.size());
    r.avg_input_tokens = in / n;
    r.avg_output_tokens = out / n;
    r.avg_total_tokens = (in + out) / n;
    r.avg_elapsed_seconds = secs / n;
    return r;
}

CostReport cost_report(std::span<const ItemResult> traces, const PriceTable& prices) {
    std::vector<TraceCost> costs;
    for (const auto& t : traces)
        if (t.trace) costs.push_back({t.trace->input_tokens, t.trace->output_tokens, t.trace->elapsed_seconds});
    return cost_report(costs, prices);
}

json report_json(const std::string& config_name, const TargetScorecard& scorecard, const CostReport& cost,
                 GtinRule gtin_rule) {
    json targets = json::array();
    for (const auto& t : scorecard.targets)
        targets.push_back({{"target", t.target},
                           {"n_correct", t.n_correct},
                           {"n_total", t.n_total},
                           {"accuracy", t.accuracy()},
                           {"rule", std::string(to_string(t.rule))}});
    return {{"config", config_name},
            {"gtin_metric", std::string(to_string(gtin_rule))},
            {"targets", std::move(targets)},
            {"cost",
             {{"n_traces", cost.n_traces},
              {"avg_input_tokens", cost.avg_input_tokens},
              {"avg_output_tokens", cost.avg_output_tokens},
              {"avg_total_tokens", cost.avg_total_tokens},
              {"total_cost", cost.total_cost},
              {"price_per_input_token", cost.prices.per_input_token},
              {"price_per_output_token", cost.prices.per_output_token}}},
            {"meta", {{"avg_elapsed_seconds", cost.avg_elapsed_seconds}}}};
}

namespace {

std::string percent(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", v * 100.0);
    return buf;
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace

std::string render_table(std::span<const std::pair<std::string, json>> reports) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"target"};
    for (const auto& [name, r] : reports) header.push_back(name);
    rows.push_back(header);

    auto cell = [&](const json& r, std::string_view target) -> std::string {
        for (const auto& t : r.value("targets", json::array()))
            if (t.value("target", "") == target) return percent(t.value("accuracy", 0.0));
        return "-";
    };
    for (auto target : kTargets) {
        std::vector<std::string> row{std::string(target)};
        for (const auto& [name, r] : reports) row.push_back(cell(r, target));
        rows.push_back(std::move(row));
    }
    auto cost_row = [&](const char* label, const char* key, int digits, const char* prefix = "") {
        std::vector<std::string> row{label};
        for (const auto& [name, r] : reports) {
            const json c = r.value("cost", json::object());
            row.push_back(prefix + fixed(c.value(key, 0.0), digits));
        }
        rows.push_back(std::move(row));
    };
    cost_row("avg. input tokens", "avg_input_tokens", 0);
    cost_row("avg. output tokens", "avg_output_tokens", 0);
    cost_row("avg. total tokens", "avg_total_tokens", 0);
    {
        std::vector<std::string> row{"avg. elapsed time/req.[s]"};
        for (const auto& [name, r] : reports)
            row.push_back(fixed(r.value("meta", json::object()).value("avg_elapsed_seconds", 0.0), 1));
        rows.push_back(std::move(row));
    }
    cost_row("approx. total costs", "total_cost", 2, "$");

    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& row : rows)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    std::ostringstream out;
    auto line = [&](const std::vector<std::string>& row) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c == 0) {
                out << row[c] << std::string(width[c] - row[c].size(), ' ');
            } else {
                out << "  " << std::string(width[c] - row[c].size(), ' ') << row[c];
            }
        }
        out << '\n';
    };
    std::size_t total = 0;
    for (auto w : width) total += w + 2;
    line(rows[0]);
    out << std::string(total - 2, '-') << '\n';
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (i == 1 + std::size(kTargets)) out << std::string(total - 2, '-') << '\n';
        line(rows[i]);
    }
    return out.str();
}

} // namespace vrag::eval
