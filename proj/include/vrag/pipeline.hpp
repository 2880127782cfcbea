#pragma once

#include "vrag/dataset.hpp"
#include "vrag/embed.hpp"
#include "vrag/preprocess.hpp"
#include "vrag/records.hpp"
#include "vrag/vlm.hpp"
#include "vrag/vstore.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vrag {

inline constexpr std::string_view kTaskDescription = "Extract all features";

// --- classification -------------------------------------------------------

enum class DecidedBy { majority, image_tiebreak, overall_nearest_fallback };

std::string_view to_string(DecidedBy d) noexcept;
/// Throws std::invalid_argument.
DecidedBy parse_decided_by(std::string_view text);

struct ClassificationOutcome {
    std::string label;
    std::map<std::string, std::size_t> votes;
    DecidedBy decided_by = DecidedBy::majority;
    std::vector<RetrievalHit> hits;
};

/**
 * Majority vote over retrieved hits (sorted nearest first).
 *
 * A unique most frequent label wins outright. On a tie, the label of the
 * nearest image-modality hit among the tied labels wins. With no image hit
 * among them, the nearest hit among the tied labels decides and the outcome
 * is flagged overall_nearest_fallback. Throws EmptyStore on no hits.
 */
ClassificationOutcome classify_hits(std::vector<RetrievalHit> hits);

/// Top-k retrieval followed by classify_hits. Throws EmptyStore.
ClassificationOutcome classify(const EmbeddingVector& query, const VectorStore& store, std::size_t k = 5);

// --- few-shot context -----------------------------------------------------

using ImageLoader = std::function<std::shared_ptr<const Image>(const DatasetItem&)>;

/// Decodes the item's image file.
ImageLoader disk_image_loader();

struct FewShotSample {
    const DatasetItem* item = nullptr;
    std::shared_ptr<const Image> image;
};

/// Text the model sees for one sample: the item's records as a JSON object
/// with the structured-output field names.
std::string sample_record_text(const DatasetItem& item);

/**
 * Few-shot samples for `label`: label-filtered hits in distance order,
 * one per distinct train item, at most `max_samples`. When no hit carries
 * the label, the label's first `max_samples` train items are used.
 * Throws UnknownLabel, or NoContextAvailable when the label has no train items.
 */
std::vector<FewShotSample> assemble_context(const Dataset& dataset, std::string_view label,
                                            std::span<const RetrievalHit> hits, std::size_t max_samples,
                                            const ImageLoader& loader);

// --- prompt ---------------------------------------------------------------

struct PromptOptions {
    /// Estimated cost of one image part; text costs ceil(bytes / 4).
    std::uint64_t image_tokens = 25000;
};

/// Task text, then (image, record) per sample, then the query image.
struct PromptDocument {
    std::vector<PromptPart> parts;

    std::size_t sample_count() const noexcept;
    /// Copy keeping only the first `n` samples (n >= 1).
    PromptDocument with_samples(std::size_t n) const;
};

std::uint64_t estimate_tokens(const PromptDocument& prompt, const PromptOptions& options = {});

/// Builds the prompt, dropping samples from the tail while the estimate
/// exceeds `budget`. Throws BudgetExceeded when one sample still does not
/// fit, std::invalid_argument on empty context or zero budget.
PromptDocument generate_prompt(std::string_view task, std::span<const FewShotSample> context,
                               std::shared_ptr<const Image> query_image, std::uint64_t budget,
                               const PromptOptions& options = {}, std::string query_source = "query");

// --- completion -----------------------------------------------------------

struct CompletionAttempt {
    std::size_t n_samples = 0;
    bool all_null = false;
    std::optional<std::string> schema_error;
    std::uint64_t input_tokens = 0;
    std::uint64_t output_tokens = 0;
    double elapsed_seconds = 0;
    std::size_t transport_failures = 0;
};

struct CompletionTrace {
    Prediction prediction;
    std::uint64_t input_tokens = 0;
    std::uint64_t output_tokens = 0;
    double elapsed_seconds = 0;
    std::vector<CompletionAttempt> attempts;
};

struct CompletionOptions {
    /// Extra tries after a transport failure, per attempt.
    std::size_t transport_retries = 2;
    std::chrono::milliseconds retry_backoff{0};
};

/**
 * Sends the prompt with the structured-output schema and parses the reply.
 * An all-null or unparseable reply to a multi-sample prompt is retried once
 * with only the first sample. Throws CompletionError once transport retries
 * are exhausted.
 */
CompletionTrace complete(const PromptDocument& prompt, VlmClient& client, const std::string& query_item_id = {},
                         const CompletionOptions& options = {});

// --- end to end -----------------------------------------------------------

struct PipelineClients {
    const Embedder& embedder;
    const Segmenter& segmenter;
    VlmClient& vlm;
};

struct PipelineConfig {
    std::size_t k = 5;
    std::size_t max_samples = 3;
    std::uint64_t token_budget = 128000;
    std::string task = std::string(kTaskDescription);
    PromptOptions prompt;
    CompletionOptions completion;
    std::size_t workers = 1;
    /// Defaults to disk_image_loader().
    ImageLoader loader;
};

struct ItemError {
    std::string stage;
    std::string kind;
    std::string message;
};

/// Everything one test item produced; stages that did not run stay empty.
struct ItemResult {
    std::string item_id;
    bool empty_mask = false;
    std::optional<ClassificationOutcome> outcome;
    std::vector<std::string> context_items;
    std::size_t prompt_samples = 0;
    std::uint64_t prompt_token_estimate = 0;
    std::optional<CompletionTrace> trace;
    std::optional<ItemError> error;

    bool ok() const noexcept { return !error && trace.has_value(); }
};

/// Name of the most derived engine error type ("NoContextAvailable", ...).
std::string error_kind(const std::exception& e);

/// preprocess -> embed -> classify -> assemble_context -> generate_prompt -> complete.
/// Never throws for per-item failures; they land in ItemResult::error.
ItemResult run_item(const DatasetItem& item, const VectorStore& store, const Dataset& dataset,
                    const PipelineClients& clients, const PipelineConfig& config);

/// run_item over `items` with config.workers threads; output order = input order.
std::vector<ItemResult> run_batch(std::span<const DatasetItem* const> items, const VectorStore& store,
                                  const Dataset& dataset, const PipelineClients& clients,
                                  const PipelineConfig& config,
                                  const std::function<void(const ItemResult&)>& on_done = {});

// --- indexing -------------------------------------------------------------

struct IndexFailure {
    std::string item_id;
    std::string stage;
    std::string message;
};

struct IndexReport {
    std::size_t items_seen = 0;
    std::size_t image_embeddings = 0;
    std::size_t text_embeddings = 0;
    std::size_t empty_masks = 0;
    std::vector<IndexFailure> failures;
};

struct IndexOptions {
    std::size_t workers = 1;
    /// Defaults to disk_image_loader().
    ImageLoader loader;
};

/// Preprocesses every train item and adds its crop embedding and, when
/// extraction produced text, its description embedding. Records are added
/// in ingest order regardless of worker count.
IndexReport index_dataset(const Dataset& dataset, VectorStore& store, const Embedder& embedder,
                          const Segmenter& segmenter, VlmClient* extraction_client, const IndexOptions& options = {});

// --- trace serialization --------------------------------------------------

/// One JSONL trace line. Wall-clock values sit under "meta" so that reruns
/// with scripted clients differ only there.
nlohmann::json to_json(const ItemResult& result);
/// Throws SchemaError.
ItemResult item_result_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ClassificationOutcome& outcome);

} // namespace vrag
