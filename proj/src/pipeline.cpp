#include "vrag/pipeline.hpp"

#include "parallel.hpp"
#include "vrag/errors.hpp"

#include <algorithm>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>
#include <unordered_set>

namespace vrag {

using nlohmann::json;

std::string_view to_string(DecidedBy d) noexcept {
    switch (d) {
    case DecidedBy::majority: return "majority";
    case DecidedBy::image_tiebreak: return "image_tiebreak";
    case DecidedBy::overall_nearest_fallback: break;
    }
    return "overall_nearest_fallback";
}

DecidedBy parse_decided_by(std::string_view text) {
    if (text == "majority") return DecidedBy::majority;
    if (text == "image_tiebreak") return DecidedBy::image_tiebreak;
    if (text == "overall_nearest_fallback") return DecidedBy::overall_nearest_fallback;
    throw std::invalid_argument("unknown decided_by \"" + std::string(text) + "\"");
}

// --- classification -------------------------------------------------------

ClassificationOutcome classify_hits(std::vector<RetrievalHit> hits) {
    if (hits.empty()) throw EmptyStore("no retrieval hits to classify");
    std::stable_sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        return a.store_id < b.store_id;
    });

    ClassificationOutcome out;
    for (const auto& h : hits) ++out.votes[h.label];
    std::size_t best = 0;
    for (const auto& [label, n] : out.votes) best = std::max(best, n);
    std::set<std::string, std::less<>> tied;
    for (const auto& [label, n] : out.votes)
        if (n == best) tied.insert(label);

    if (tied.size() == 1) {
        out.label = *tied.begin();
        out.decided_by = DecidedBy::majority;
    } else {
        auto image_hit = std::find_if(hits.begin(), hits.end(), [&](const RetrievalHit& h) {
            return h.modality == Modality::image && tied.contains(h.label);
        });
        if (image_hit != hits.end()) {
            out.label = image_hit->label;
            out.decided_by = DecidedBy::image_tiebreak;
        } else {
            auto nearest = std::find_if(hits.begin(), hits.end(), [&](const RetrievalHit& h) { return tied.contains(h.label); });
            out.label = nearest->label;
            out.decided_by = DecidedBy::overall_nearest_fallback;
        }
    }
    out.hits = std::move(hits);
    return out;
}

ClassificationOutcome classify(const EmbeddingVector& query, const VectorStore& store, std::size_t k) {
    return classify_hits(store.search_topk(query, k));
}

// --- few-shot context -----------------------------------------------------

ImageLoader disk_image_loader() {
    return [](const DatasetItem& item) { return std::make_shared<const Image>(load_image(item.image_path)); };
}

std::string sample_record_text(const DatasetItem& item) {
    return to_json(Prediction::from_records(item.product, item.promotion)).dump();
}

std::vector<FewShotSample> assemble_context(const Dataset& dataset, std::string_view label,
                                            std::span<const RetrievalHit> hits, std::size_t max_samples,
                                            const ImageLoader& loader) {
    if (max_samples == 0) throw std::invalid_argument("max_samples must be at least 1");
    std::vector<std::string> order;
    std::unordered_set<std::string> seen;
    for (const auto& h : hits)
        if (h.label == label && seen.insert(h.item_id).second) order.push_back(h.item_id);

    auto train = dataset.relational_query(label, order);
    if (train.empty()) throw NoContextAvailable("label \"" + std::string(label) + "\" has no train items");

    std::size_t matched = 0;
    while (matched < train.size() && seen.contains(train[matched]->item_id)) ++matched;
    std::size_t take = std::min(matched == 0 ? train.size() : matched, max_samples);

    std::vector<FewShotSample> samples;
    samples.reserve(take);
    for (std::size_t i = 0; i < take; ++i) samples.push_back({train[i], loader ? loader(*train[i]) : nullptr});
    return samples;
}

// --- prompt ---------------------------------------------------------------

std::size_t PromptDocument::sample_count() const noexcept {
    return static_cast<std::size_t>(std::count_if(parts.begin(), parts.end(), [](const PromptPart& p) {
        return p.role == PartRole::context_image;
    }));
}

PromptDocument PromptDocument::with_samples(std::size_t n) const {
    PromptDocument out;
    std::size_t sample = 0;
    for (const auto& part : parts) {
        if (part.role == PartRole::context_image) ++sample;
        bool is_context = part.role == PartRole::context_image || part.role == PartRole::context_record;
        if (is_context && sample > n) continue;
        out.parts.push_back(part);
    }
    return out;
}

std::uint64_t estimate_tokens(const PromptDocument& prompt, const PromptOptions& options) {
    std::uint64_t total = 0;
    for (const auto& part : prompt.parts)
        total += part.kind == PromptPart::Kind::image ? options.image_tokens : (part.text.size() + 3) / 4;
    return total;
}

PromptDocument generate_prompt(std::string_view task, std::span<const FewShotSample> context,
                               std::shared_ptr<const Image> query_image, std::uint64_t budget,
                               const PromptOptions& options, std::string query_source) {
    if (context.empty()) throw std::invalid_argument("prompt needs at least one context sample");
    if (budget == 0) throw std::invalid_argument("token budget must be positive");

    PromptDocument doc;
    doc.parts.push_back(PromptPart::make_text(PartRole::task, std::string(task)));
    for (const auto& sample : context) {
        if (!sample.item) throw std::invalid_argument("context sample without an item");
        doc.parts.push_back(PromptPart::make_image(PartRole::context_image, sample.image, sample.item->item_id));
        doc.parts.push_back(PromptPart::make_text(PartRole::context_record, sample_record_text(*sample.item)));
    }
    doc.parts.push_back(PromptPart::make_image(PartRole::query_image, std::move(query_image), std::move(query_source)));

    std::size_t n = context.size();
    while (n > 1 && estimate_tokens(doc, options) > budget) doc = doc.with_samples(--n);
    if (auto estimate = estimate_tokens(doc, options); estimate > budget)
        throw BudgetExceeded("prompt with one sample needs ~" + std::to_string(estimate) + " tokens, budget is " +
                             std::to_string(budget));
    return doc;
}

// --- completion -----------------------------------------------------------

namespace {

struct ParsedAttempt {
    CompletionAttempt attempt;
    Prediction prediction;
};

ParsedAttempt run_attempt(const PromptDocument& prompt, VlmClient& client, const std::string& query_item_id,
                          const CompletionOptions& options) {
    VlmRequest request;
    request.parts = prompt.parts;
    request.schema = prediction_schema();
    request.query_item_id = query_item_id;
    request.context_samples = prompt.sample_count();

    ParsedAttempt out;
    out.attempt.n_samples = request.context_samples;
    auto start = std::chrono::steady_clock::now();
    VlmReply reply;
    for (;;) {
        try {
            reply = client.send(request);
            break;
        } catch (const TransportError& e) {
            if (++out.attempt.transport_failures > options.transport_retries)
                throw CompletionError("completion failed after " + std::to_string(out.attempt.transport_failures) +
                                      " tries: " + e.what());
            if (options.retry_backoff.count() > 0) std::this_thread::sleep_for(options.retry_backoff);
        }
    }
    out.attempt.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.attempt.input_tokens = reply.usage.input_tokens;
    out.attempt.output_tokens = reply.usage.output_tokens;
    try {
        out.prediction = parse_prediction(reply.content);
    } catch (const SchemaError& e) {
        out.attempt.schema_error = e.what();
    }
    out.attempt.all_null = out.attempt.schema_error.has_value() || out.prediction.all_null();
    return out;
}

} // namespace

CompletionTrace complete(const PromptDocument& prompt, VlmClient& client, const std::string& query_item_id,
                         const CompletionOptions& options) {
    CompletionTrace trace;
    auto record = [&](ParsedAttempt&& a) {
        trace.input_tokens += a.attempt.input_tokens;
        trace.output_tokens += a.attempt.output_tokens;
        trace.elapsed_seconds += a.attempt.elapsed_seconds;
        trace.attempts.push_back(a.attempt);
        trace.prediction = std::move(a.prediction);
    };
    auto first = run_attempt(prompt, client, query_item_id, options);
    bool retry = first.attempt.all_null && prompt.sample_count() > 1;
    record(std::move(first));
    if (retry) record(run_attempt(prompt.with_samples(1), client, query_item_id, options));
    return trace;
}

// --- end to end -----------------------------------------------------------

std::string error_kind(const std::exception& e) {
#define VRAG_KIND(T) \
    if (dynamic_cast<const T*>(&e)) return #T;
    VRAG_KIND(InvalidGtin)
    VRAG_KIND(DuplicateItem)
    VRAG_KIND(UnknownLabel)
    VRAG_KIND(EmbedError)
    VRAG_KIND(DimensionError)
    VRAG_KIND(EmptyStore)
    VRAG_KIND(SnapshotError)
    VRAG_KIND(ImageError)
    VRAG_KIND(SegmentationError)
    VRAG_KIND(EmptyMask)
    VRAG_KIND(ExtractionError)
    VRAG_KIND(NoContextAvailable)
    VRAG_KIND(BudgetExceeded)
    VRAG_KIND(CompletionError)
    VRAG_KIND(SchemaError)
    VRAG_KIND(EvalError)
    VRAG_KIND(ConfigError)
    VRAG_KIND(TransportError)
    VRAG_KIND(IngestError)
#undef VRAG_KIND
    return "Error";
}

ItemResult run_item(const DatasetItem& item, const VectorStore& store, const Dataset& dataset,
                    const PipelineClients& clients, const PipelineConfig& config) {
    ItemResult result;
    result.item_id = item.item_id;
    const ImageLoader& loader = config.loader;
    const char* stage = "load";
    try {
        std::shared_ptr<const Image> image = loader ? loader(item) : disk_image_loader()(item);
        if (!image) throw ImageError("no image for item " + item.item_id);

        stage = "preprocess";
        auto mask = segment(clients.segmenter, *image);
        Image crop;
        if (mask.empty()) {
            result.empty_mask = true;
            crop = *image;
        } else {
            crop = crop_product(*image, mask);
        }

        stage = "embed";
        auto query = clients.embedder.embed_image(crop);

        stage = "classify";
        result.outcome = classify(query, store, config.k);

        stage = "context";
        auto context = assemble_context(dataset, result.outcome->label, result.outcome->hits, config.max_samples,
                                        loader ? loader : disk_image_loader());

        stage = "prompt";
        auto prompt = generate_prompt(config.task, context, image, config.token_budget, config.prompt, item.item_id);
        result.prompt_samples = prompt.sample_count();
        result.prompt_token_estimate = estimate_tokens(prompt, config.prompt);
        for (std::size_t i = 0; i < result.prompt_samples; ++i) result.context_items.push_back(context[i].item->item_id);

        stage = "complete";
        result.trace = complete(prompt, clients.vlm, item.item_id, config.completion);
    } catch (const std::exception& e) {
        result.error = ItemError{stage, error_kind(e), e.what()};
    }
    return result;
}

std::vector<ItemResult> run_batch(std::span<const DatasetItem* const> items, const VectorStore& store,
                                  const Dataset& dataset, const PipelineClients& clients,
                                  const PipelineConfig& config,
                                  const std::function<void(const ItemResult&)>& on_done) {
    std::vector<std::optional<ItemResult>> slots(items.size());
    std::mutex sink_mutex;
    std::size_t next_to_emit = 0;
    detail::parallel_for(items.size(), config.workers, [&](std::size_t i) {
        auto r = run_item(*items[i], store, dataset, clients, config);
        std::lock_guard lock(sink_mutex);
        slots[i] = std::move(r);
        while (next_to_emit < slots.size() && slots[next_to_emit]) {
            if (on_done) on_done(*slots[next_to_emit]);
            ++next_to_emit;
        }
    });
    std::vector<ItemResult> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

// --- indexing -------------------------------------------------------------

IndexReport index_dataset(const Dataset& dataset, VectorStore& store, const Embedder& embedder,
                          const Segmenter& segmenter, VlmClient* extraction_client, const IndexOptions& options) {
    std::vector<const DatasetItem*> train;
    for (const auto& item : dataset.items())
        if (item.split == Split::train) train.push_back(&item);

    struct Work {
        std::optional<EmbeddingVector> image;
        std::optional<EmbeddingVector> text;
        bool empty_mask = false;
        std::vector<IndexFailure> failures;
    };
    std::vector<Work> work(train.size());
    ImageLoader loader = options.loader ? options.loader : disk_image_loader();

    detail::parallel_for(train.size(), options.workers, [&](std::size_t i) {
        const auto& item = *train[i];
        auto& w = work[i];
        const char* stage = "load";
        try {
            auto image = loader(item);
            if (!image) throw ImageError("no image for item " + item.item_id);
            stage = "preprocess";
            auto pre = preprocess(*image, segmenter, extraction_client, item.item_id);
            w.empty_mask = pre.empty_mask;
            if (pre.extraction_error && !pre.empty_mask && extraction_client)
                w.failures.push_back({item.item_id, "extract", *pre.extraction_error});
            stage = "embed_image";
            w.image = embedder.embed_image(pre.product_crop);
            if (!pre.description_text.empty()) {
                stage = "embed_text";
                w.text = embedder.embed_text(pre.description_text);
            }
        } catch (const std::exception& e) {
            w.failures.push_back({item.item_id, stage, e.what()});
        }
    });

    IndexReport report;
    report.items_seen = train.size();
    for (std::size_t i = 0; i < train.size(); ++i) {
        auto& w = work[i];
        const auto& item = *train[i];
        try {
            if (w.image) {
                store.add(*w.image, item.label, item.item_id);
                ++report.image_embeddings;
            }
            if (w.text) {
                store.add(*w.text, item.label, item.item_id);
                ++report.text_embeddings;
            }
        } catch (const std::exception& e) {
            w.failures.push_back({item.item_id, "store", e.what()});
        }
        if (w.empty_mask) ++report.empty_masks;
        for (auto& f : w.failures) report.failures.push_back(std::move(f));
    }
    return report;
}

// --- trace serialization --------------------------------------------------

json to_json(const ClassificationOutcome& outcome) {
    json hits = json::array();
    for (const auto& h : outcome.hits)
        hits.push_back({{"store_id", h.store_id},
                        {"label", h.label},
                        {"item_id", h.item_id},
                        {"modality", std::string(to_string(h.modality))},
                        {"distance", h.distance}});
    return {{"label", outcome.label},
            {"votes", outcome.votes},
            {"decided_by", std::string(to_string(outcome.decided_by))},
            {"hits", std::move(hits)}};
}

json to_json(const ItemResult& r) {
    json j = {{"item_id", r.item_id},
              {"empty_mask", r.empty_mask},
              {"context_items", r.context_items},
              {"prompt_samples", r.prompt_samples},
              {"prompt_token_estimate", r.prompt_token_estimate}};
    j["outcome"] = r.outcome ? to_json(*r.outcome) : json(nullptr);
    json meta = json::object();
    if (r.trace) {
        json attempts = json::array();
        json attempt_seconds = json::array();
        for (const auto& a : r.trace->attempts) {
            attempts.push_back({{"n_samples", a.n_samples},
                                {"all_null", a.all_null},
                                {"schema_error", a.schema_error ? json(*a.schema_error) : json(nullptr)},
                                {"input_tokens", a.input_tokens},
                                {"output_tokens", a.output_tokens},
                                {"transport_failures", a.transport_failures}});
            attempt_seconds.push_back(a.elapsed_seconds);
        }
        j["prediction"] = to_json(r.trace->prediction);
        j["attempts"] = std::move(attempts);
        j["input_tokens"] = r.trace->input_tokens;
        j["output_tokens"] = r.trace->output_tokens;
        meta["elapsed_seconds"] = r.trace->elapsed_seconds;
        meta["attempt_seconds"] = std::move(attempt_seconds);
    } else {
        j["prediction"] = nullptr;
        j["attempts"] = json::array();
        j["input_tokens"] = 0;
        j["output_tokens"] = 0;
    }
    j["error"] = r.error ? json{{"stage", r.error->stage}, {"kind", r.error->kind}, {"message", r.error->message}}
                         : json(nullptr);
    j["meta"] = std::move(meta);
    return j;
}

ItemResult item_result_from_json(const json& j) {
    try {
        if (!j.is_object()) throw SchemaError("trace line is not a JSON object");
        ItemResult r;
        r.item_id = j.at("item_id").get<std::string>();
        r.empty_mask = j.value("empty_mask", false);
        r.context_items = j.value("context_items", std::vector<std::string>{});
        r.prompt_samples = j.value("prompt_samples", std::size_t{0});
        r.prompt_token_estimate = j.value("prompt_token_estimate", std::uint64_t{0});
        if (const auto& o = j.value("outcome", json(nullptr)); !o.is_null()) {
            ClassificationOutcome out;
            out.label = o.at("label").get<std::string>();
            out.votes = o.at("votes").get<std::map<std::string, std::size_t>>();
            out.decided_by = parse_decided_by(o.at("decided_by").get<std::string>());
            for (const auto& h : o.at("hits"))
                out.hits.push_back({h.at("store_id").get<std::uint64_t>(), h.at("label").get<std::string>(),
                                    h.at("item_id").get<std::string>(), parse_modality(h.at("modality").get<std::string>()),
                                    h.at("distance").get<double>()});
            r.outcome = std::move(out);
        }
        if (const auto& p = j.value("prediction", json(nullptr)); !p.is_null()) {
            CompletionTrace t;
            t.prediction = prediction_from_json(p);
            t.input_tokens = j.value("input_tokens", std::uint64_t{0});
            t.output_tokens = j.value("output_tokens", std::uint64_t{0});
            const json meta = j.value("meta", json::object());
            t.elapsed_seconds = meta.value("elapsed_seconds", 0.0);
            const json seconds = meta.value("attempt_seconds", json::array());
            std::size_t i = 0;
            for (const auto& a : j.at("attempts")) {
                CompletionAttempt at;
                at.n_samples = a.at("n_samples").get<std::size_t>();
                at.all_null = a.at("all_null").get<bool>();
                if (const auto& s = a.value("schema_error", json(nullptr)); !s.is_null()) at.schema_error = s.get<std::string>();
                at.input_tokens = a.value("input_tokens", std::uint64_t{0});
                at.output_tokens = a.value("output_tokens", std::uint64_t{0});
                at.transport_failures = a.value("transport_failures", std::size_t{0});
                if (i < seconds.size()) at.elapsed_seconds = seconds[i].get<double>();
                ++i;
                t.attempts.push_back(std::move(at));
            }
            r.trace = std::move(t);
        }
        if (const auto& e = j.value("error", json(nullptr)); !e.is_null())
            r.error = ItemError{e.value("stage", ""), e.value("kind", ""), e.value("message", "")};
        return r;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed trace: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw SchemaError(std::string("malformed trace: ") + e.what());
    }
}

} // namespace vrag
