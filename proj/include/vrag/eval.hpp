#pragma once

#include "vrag/dataset.hpp"
#include "vrag/pipeline.hpp"
#include "vrag/records.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vrag::eval {

enum class MatchRule { substring, exact, gtin_exact_set, gtin_union_membership, gtin_any_match };
enum class GtinRule { exact_set, union_membership, any_match };

std::string_view to_string(MatchRule r) noexcept;
std::string_view to_string(GtinRule r) noexcept;
/// Accepts "exact_set", "union", "union_membership", "any", "any_match".
GtinRule parse_gtin_rule(std::string_view text);

/// Case-folded, whitespace-collapsed `predicted` is a substring of some
/// equally normalized GT value. An empty prediction never matches.
bool match_substring(std::string_view predicted, std::span<const std::string> gt_values);

/// Both absent: match. One absent: no match. Otherwise ==.
template <class T>
bool match_exact(const std::optional<T>& predicted, const std::optional<T>& gt) {
    if (!predicted || !gt) return !predicted && !gt;
    return *predicted == *gt;
}

bool match_gtin_exact_set(std::span<const Gtin> predicted, std::span<const Gtin> gt);
/// Non-empty and every predicted GTIN is in the class union.
bool match_gtin_union(std::span<const Gtin> predicted, const std::set<Gtin>& class_union);
/// At least one GTIN in common.
bool match_gtin_any(std::span<const Gtin> predicted, std::span<const Gtin> gt);

struct ScoringRules {
    GtinRule gtin = GtinRule::exact_set;
};

struct TargetScore {
    std::string target;
    std::size_t n_correct = 0;
    std::size_t n_total = 0;
    MatchRule rule = MatchRule::exact;

    double accuracy() const noexcept { return n_total == 0 ? 0.0 : static_cast<double>(n_correct) / n_total; }
};

/// Rows in the order brand, product_category, product_weight, GTINs,
/// different_sorts, price, regular_price, relative_discount, absolute_discount.
struct TargetScorecard {
    std::vector<TargetScore> targets;

    /// nullptr when absent.
    const TargetScore* find(std::string_view target) const;
};

inline constexpr std::string_view kTargets[] = {
    "brand",           "product_category", "product_weight",    "GTINs",            "different_sorts",
    "price",           "regular_price",    "relative_discount", "absolute_discount",
};

/// Per-target verdicts for one prediction against its item's ground truth.
/// Index order follows kTargets.
std::vector<bool> score_item(const Prediction& prediction, const DatasetItem& item, const Dataset& dataset,
                             const ScoringRules& rules);

/// Accuracy per target over all traces. Items without a completion count as
/// wrong on every target. Throws EvalError for traces naming an unknown or
/// non-test item, or the same item twice.
TargetScorecard score_run(std::span<const ItemResult> traces, const Dataset& dataset, const ScoringRules& rules);

struct PriceTable {
    double per_input_token = 0;
    double per_output_token = 0;
};

struct CostReport {
    std::size_t n_traces = 0;
    double avg_input_tokens = 0;
    double avg_output_tokens = 0;
    double avg_total_tokens = 0;
    double avg_elapsed_seconds = 0;
    double total_cost = 0;
    PriceTable prices;
};

struct TraceCost {
    std::uint64_t input_tokens = 0;
    std::uint64_t output_tokens = 0;
    double elapsed_seconds = 0;
};

/// Averages over the given traces; total = sum(in * p_in + out * p_out).
/// Throws std::invalid_argument on negative prices.
CostReport cost_report(std::span<const TraceCost> traces, const PriceTable& prices);
/// Uses traces that reached the model, summing all attempts per item.
CostReport cost_report(std::span<const ItemResult> traces, const PriceTable& prices);

/// Machine-readable report. Wall-clock figures live under "meta".
nlohmann::json report_json(const std::string& config_name, const TargetScorecard& scorecard, const CostReport& cost,
                           GtinRule gtin_rule);

/// Aligned text table: one row per target, one column per configuration,
/// followed by the token and cost rows.
std::string render_table(std::span<const std::pair<std::string, nlohmann::json>> reports);

} // namespace vrag::eval
