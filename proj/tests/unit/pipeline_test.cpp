#include "test_support.hpp"

#include "vrag/errors.hpp"
#include "vrag/eval.hpp"
#include "vrag/pipeline.hpp"

#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

using namespace vrag;
using nlohmann::json;

namespace {

RetrievalHit hit(std::uint64_t id, std::string label, double d, Modality m = Modality::image, std::string item = {}) {
    return {id, label, item.empty() ? "i" + std::to_string(id) : item, m, d};
}

DatasetItem train_item(std::string id, std::string label) {
    DatasetItem item;
    item.item_id = std::move(id);
    item.label = std::move(label);
    item.product.brand = "Brand " + item.label;
    item.promotion.price = Decimal::parse("1.99");
    return item;
}

ImageLoader memory_loader() {
    return [](const DatasetItem& item) {
        auto h = std::hash<std::string>{}(item.item_id);
        return std::make_shared<const Image>(8, 8, Rgb{static_cast<std::uint8_t>(h), static_cast<std::uint8_t>(h >> 8), 0});
    };
}

std::vector<std::string> sample_ids(const std::vector<FewShotSample>& samples) {
    std::vector<std::string> out;
    for (const auto& s : samples) out.push_back(s.item->item_id);
    return out;
}

PromptDocument three_sample_prompt(const Dataset& d) {
    auto ctx = assemble_context(d, "L", {}, 3, memory_loader());
    return generate_prompt(kTaskDescription, ctx, std::make_shared<const Image>(8, 8), 128000);
}

Dataset labelled(std::size_t n, std::string label = "L") {
    Dataset d;
    for (std::size_t i = 0; i < n; ++i) d.add_item(train_item(label + std::to_string(i), label));
    return d;
}

} // namespace

TEST(Classify, UniqueModeWins) {
    auto o = classify_hits({hit(0, "B", .1), hit(1, "B", .2), hit(2, "B", .3), hit(3, "A", .4), hit(4, "C", .5)});
    EXPECT_EQ(o.label, "B");
    EXPECT_EQ(o.decided_by, DecidedBy::majority);
    EXPECT_EQ(o.votes.at("B"), 3u);
}

TEST(Classify, TieGoesToNearestImageAmongTiedLabels) {
    auto o = classify_hits({hit(0, "A", .1, Modality::text), hit(1, "A", .2, Modality::text), hit(2, "C", .3),
                            hit(3, "C", .4), hit(4, "B", .05)});
    EXPECT_EQ(o.label, "C");
    EXPECT_EQ(o.decided_by, DecidedBy::image_tiebreak);
}

TEST(Classify, FallbackWhenNoImageAmongTiedLabels) {
    auto o = classify_hits({hit(0, "B", .05), hit(1, "A", .2, Modality::text), hit(2, "C", .1, Modality::text),
                            hit(3, "C", .3, Modality::text), hit(4, "A", .25, Modality::text)});
    EXPECT_EQ(o.label, "C");
    EXPECT_EQ(o.decided_by, DecidedBy::overall_nearest_fallback);
    EXPECT_EQ(o.hits.front().label, "B");
}

TEST(Classify, OutcomeLabelAlwaysHasMaximalVotes) {
    std::mt19937 rng(17);
    for (int t = 0; t < 300; ++t) {
        std::vector<RetrievalHit> hits;
        for (int i = 0; i < 5; ++i)
            hits.push_back(hit(rng() % 50, std::string(1, static_cast<char>('a' + rng() % 3)), (rng() % 4) / 4.0,
                               rng() % 2 ? Modality::image : Modality::text));
        auto o = classify_hits(hits);
        std::size_t best = 0, modes = 0;
        for (const auto& [l, c] : o.votes) best = std::max(best, c);
        for (const auto& [l, c] : o.votes) modes += c == best;
        ASSERT_EQ(o.votes.at(o.label), best);
        ASSERT_EQ(o.decided_by == DecidedBy::majority, modes == 1);
    }
    EXPECT_THROW(classify_hits({}), EmptyStore);
}

TEST(Classify, KOneReturnsNearestAsMajority) {
    std::mt19937_64 rng(23);
    VectorStore store;
    for (int i = 0; i < 60; ++i) store.add(test::random_vector(rng, 16), "L" + std::to_string(i % 5), "i" + std::to_string(i));
    for (int q = 0; q < 20; ++q) {
        auto query = test::random_vector(rng, 16);
        auto o = classify(query, store, 1);
        EXPECT_EQ(o.label, store.search_topk(query, 1).front().label);
        EXPECT_EQ(o.decided_by, DecidedBy::majority);
    }
}

TEST(Classify, StoreQueriesAgreeWithHitRule) {
    std::mt19937_64 rng(150);
    VectorStore store;
    for (int i = 0; i < 150; ++i)
        store.add(test::random_vector(rng, 16, i % 3 ? Modality::image : Modality::text), "L" + std::to_string(i % 6),
                  "i" + std::to_string(i));
    for (int q = 0; q < 50; ++q) {
        auto query = test::random_vector(rng, 16);
        auto o = classify(query, store, 5);
        auto direct = classify_hits(test::brute_force_topk(store.records(), query, 5));
        EXPECT_EQ(o.label, direct.label);
        EXPECT_EQ(o.decided_by, direct.decided_by);
        EXPECT_EQ(o.hits.size(), 5u);
    }
}

TEST(Context, FollowsFilteredHitOrder) {
    Dataset d = labelled(4);
    d.add_item(train_item("other", "M"));
    std::vector<RetrievalHit> hits{hit(0, "L", .1, Modality::image, "L2"), hit(1, "M", .15, Modality::image, "other"),
                                   hit(2, "L", .2, Modality::image, "L0"), hit(3, "L", .3, Modality::image, "L3"),
                                   hit(4, "L", .4, Modality::image, "L1")};
    auto ctx = assemble_context(d, "L", hits, 3, memory_loader());
    EXPECT_EQ(sample_ids(ctx), (std::vector<std::string>{"L2", "L0", "L3"}));
    for (const auto& s : ctx) EXPECT_TRUE(s.image);
}

TEST(Context, FewerMatchesGiveFewerSamples) {
    Dataset d = labelled(4);
    std::vector<RetrievalHit> hits{hit(0, "L", .1, Modality::image, "L3"), hit(1, "X", .2),
                                   hit(2, "L", .3, Modality::text, "L1")};
    EXPECT_EQ(sample_ids(assemble_context(d, "L", hits, 3, memory_loader())), (std::vector<std::string>{"L3", "L1"}));
}

TEST(Context, DeduplicatesImageAndTextOfOneItem) {
    Dataset d = labelled(3);
    std::vector<RetrievalHit> hits{hit(0, "L", .1, Modality::image, "L1"), hit(1, "L", .2, Modality::text, "L1")};
    EXPECT_EQ(sample_ids(assemble_context(d, "L", hits, 3, memory_loader())), (std::vector<std::string>{"L1"}));
}

TEST(Context, FallsBackToIngestOrder) {
    Dataset d = labelled(5);
    std::vector<RetrievalHit> hits{hit(0, "X", .1)};
    EXPECT_EQ(sample_ids(assemble_context(d, "L", hits, 3, memory_loader())),
              (std::vector<std::string>{"L0", "L1", "L2"}));
}

TEST(Context, NeverUsesTestItems) {
    Dataset d = labelled(1);
    auto t = train_item("T", "L");
    t.split = Split::test;
    d.add_item(t);
    std::vector<RetrievalHit> hits{hit(0, "L", .1, Modality::image, "T")};
    EXPECT_EQ(sample_ids(assemble_context(d, "L", hits, 3, memory_loader())), (std::vector<std::string>{"L0"}));
}

TEST(Context, Errors) {
    Dataset d;
    auto t = train_item("T", "only_test");
    t.split = Split::test;
    d.add_item(t);
    EXPECT_THROW(assemble_context(d, "only_test", {}, 3, memory_loader()), NoContextAvailable);
    EXPECT_THROW(assemble_context(d, "missing", {}, 3, memory_loader()), UnknownLabel);
}

TEST(Prompt, DeclaredPartOrder) {
    Dataset d = labelled(3);
    auto prompt = three_sample_prompt(d);
    ASSERT_EQ(prompt.parts.size(), 8u);
    EXPECT_EQ(prompt.parts[0].role, PartRole::task);
    EXPECT_EQ(prompt.parts[0].text, "Extract all features");
    for (int i = 0; i < 3; ++i) {
        EXPECT_EQ(prompt.parts[static_cast<std::size_t>(1 + 2 * i)].role, PartRole::context_image);
        EXPECT_EQ(prompt.parts[static_cast<std::size_t>(2 + 2 * i)].role, PartRole::context_record);
    }
    EXPECT_EQ(prompt.parts.back().role, PartRole::query_image);
    auto record = json::parse(prompt.parts[2].text);
    EXPECT_EQ(record["brand"], "Brand L");
    EXPECT_EQ(record["price"], 1.99);
}

TEST(Prompt, BudgetDropsSamplesFromTail) {
    Dataset d = labelled(3);
    auto ctx = assemble_context(d, "L", {}, 3, memory_loader());
    auto query = std::make_shared<const Image>(8, 8);
    auto full = generate_prompt(kTaskDescription, ctx, query, 1u << 30);
    auto need = estimate_tokens(full);
    EXPECT_EQ(full.sample_count(), 3u);

    auto two = generate_prompt(kTaskDescription, ctx, query, need - 1);
    EXPECT_EQ(two.sample_count(), 2u);
    EXPECT_EQ(two.parts[1].source, "L0");
    EXPECT_EQ(two.parts[3].source, "L1");

    auto one = generate_prompt(kTaskDescription, ctx, query, 60000);
    EXPECT_EQ(one.sample_count(), 1u);
    EXPECT_THROW(generate_prompt(kTaskDescription, ctx, query, 40000), BudgetExceeded);
    EXPECT_THROW(generate_prompt(kTaskDescription, {}, query, 1000), std::invalid_argument);
    EXPECT_THROW(generate_prompt(kTaskDescription, ctx, query, 0), std::invalid_argument);
}

TEST(Prompt, ThreeSampleEstimateFitsDefaultBudget) {
    Dataset d = labelled(3);
    auto prompt = three_sample_prompt(d);
    auto estimate = estimate_tokens(prompt);
    EXPECT_GT(estimate, 100000u);
    EXPECT_LE(estimate, 128000u);
    EXPECT_EQ(prompt.sample_count(), 3u);
}

TEST(Prompt, EstimateIsMonotoneInSamples) {
    Dataset d = labelled(3);
    auto prompt = three_sample_prompt(d);
    EXPECT_LT(estimate_tokens(prompt.with_samples(1)), estimate_tokens(prompt.with_samples(2)));
    EXPECT_LT(estimate_tokens(prompt.with_samples(2)), estimate_tokens(prompt));
}

TEST(Complete, EchoesFirstContextRecord) {
    Dataset d = labelled(3);
    auto prompt = three_sample_prompt(d);
    ScriptedVlmClient client(json{{"default", {{"echo_context", true}}}});
    auto trace = complete(prompt, client, "q");
    const auto& first = *d.find("L0");
    EXPECT_EQ(trace.prediction, Prediction::from_records(first.product, first.promotion));
    ASSERT_EQ(trace.attempts.size(), 1u);
    EXPECT_EQ(trace.attempts[0].n_samples, 3u);
    EXPECT_GT(trace.input_tokens, 0u);
    auto req = client.requests().at(0);
    ASSERT_TRUE(req.schema);
    EXPECT_EQ(*req.schema, prediction_schema());
}

TEST(Complete, NullReplyRetriesWithOneSample) {
    Dataset d = labelled(3);
    auto prompt = three_sample_prompt(d);
    ScriptedVlmClient client(json{{"default", {{"null_above_samples", 1}, {"prediction", {{"brand", "Heinz"}}}}}});
    auto trace = complete(prompt, client, "q");
    ASSERT_EQ(trace.attempts.size(), 2u);
    EXPECT_EQ(trace.attempts[0].n_samples, 3u);
    EXPECT_TRUE(trace.attempts[0].all_null);
    EXPECT_EQ(trace.attempts[1].n_samples, 1u);
    EXPECT_FALSE(trace.attempts[1].all_null);
    EXPECT_EQ(trace.prediction.brand, "Heinz");
    EXPECT_EQ(trace.input_tokens, trace.attempts[0].input_tokens + trace.attempts[1].input_tokens);
    EXPECT_EQ(client.requests().at(1).context_samples, 1u);
}

TEST(Complete, AtMostTwoAttempts) {
    Dataset d = labelled(3);
    auto prompt = three_sample_prompt(d);
    ScriptedVlmClient always_null(json{{"default", json::object()}});
    auto trace = complete(prompt, always_null, "q");
    EXPECT_EQ(trace.attempts.size(), 2u);
    EXPECT_TRUE(trace.prediction.all_null());

    ScriptedVlmClient single(json{{"default", json::object()}});
    EXPECT_EQ(complete(prompt.with_samples(1), single, "q").attempts.size(), 1u);
}

TEST(Complete, UnparseableReplyCountsAsNull) {
    Dataset d = labelled(2);
    auto prompt = three_sample_prompt(d);
    ScriptedVlmClient client(json{{"default", {{"raw", "I cannot help with that."}}}});
    auto trace = complete(prompt, client, "q");
    ASSERT_EQ(trace.attempts.size(), 2u);
    EXPECT_TRUE(trace.attempts[0].schema_error);
    EXPECT_TRUE(trace.attempts[0].all_null);
}

TEST(Complete, ParsesStructuredOutputListing) {
    Dataset d = labelled(1);
    auto prompt = three_sample_prompt(d);
    const char* listing = "brand='Lorenz'\nprice=0.99\nregular_price=1.87\nrelative_discount=47\n"
                          "absolute_discount=None\nproduct_category=['Saltletts Sticks']\n"
                          "GTINs=['04018077683015', '04018077686719']\nweight_number=250.0\n"
                          "weight_unit=<WeightUnit.Gramm: 'Gramm'>\ndifferent_sorts=<DifferentSorts.yes: 'yes'>";
    ScriptedVlmClient client(json{{"default", {{"raw", listing}}}});
    auto p = complete(prompt, client, "q").prediction;
    EXPECT_EQ(p.brand, "Lorenz");
    EXPECT_EQ(p.price, Decimal::parse("0.99"));
    EXPECT_EQ(p.regular_price, Decimal::parse("1.87"));
    EXPECT_EQ(p.relative_discount, 47);
    ASSERT_EQ(p.gtins.size(), 2u);
    EXPECT_EQ(p.gtins[1].digits(), "04018077686719");
    EXPECT_EQ(p.weight_number, Decimal::parse("250.0"));
    EXPECT_EQ(p.weight_unit, WeightUnit::parse("Gramm"));
    EXPECT_EQ(p.different_sorts, DifferentSorts::yes);
}

TEST(Complete, TransportRetriesThenFails) {
    Dataset d = labelled(1);
    auto prompt = three_sample_prompt(d);
    ScriptedVlmClient flaky(json{{"default", {{"fail", "503"}, {"fail_times", 2}, {"prediction", {{"brand", "X"}}}}}});
    auto trace = complete(prompt, flaky, "q");
    EXPECT_EQ(trace.attempts.at(0).transport_failures, 2u);
    EXPECT_EQ(trace.prediction.brand, "X");

    ScriptedVlmClient down(json{{"default", {{"fail", "connection refused"}}}});
    EXPECT_THROW(complete(prompt, down, "q", {.transport_retries = 1}), CompletionError);
    EXPECT_EQ(down.call_count(), 2u);
}

TEST(RunItem, ClosedLoopPredictionsEqualGroundTruth) {
    auto run = test::run_closed_loop("vlm_echo.json");
    EXPECT_EQ(run.index.items_seen, 8u);
    EXPECT_EQ(run.store.count(Modality::image), 8u);
    EXPECT_EQ(run.store.count(Modality::text), 8u);
    ASSERT_EQ(run.results.size(), 4u);
    for (const auto& r : run.results) {
        ASSERT_TRUE(r.ok()) << r.item_id;
        const auto* item = run.dataset.find(r.item_id);
        EXPECT_EQ(r.trace->prediction, Prediction::from_records(item->product, item->promotion)) << r.item_id;
        EXPECT_EQ(r.outcome->label, item->label);
        EXPECT_EQ(r.prompt_samples, 2u);
        for (const auto& id : r.context_items) EXPECT_EQ(run.dataset.find(id)->label, item->label);
    }
}

TEST(RunItem, WorkersDoNotChangeResults) {
    auto serial = test::run_closed_loop("vlm_null_retry.json", 1);
    auto parallel = test::run_closed_loop("vlm_null_retry.json", 3);
    ASSERT_EQ(serial.results.size(), parallel.results.size());
    for (std::size_t i = 0; i < serial.results.size(); ++i) {
        auto a = to_json(serial.results[i]), b = to_json(parallel.results[i]);
        a.erase("meta");
        b.erase("meta");
        EXPECT_EQ(a, b);
    }
    auto sa = serial.store.records(), sb = parallel.store.records();
    ASSERT_EQ(sa.size(), sb.size());
    for (std::size_t i = 0; i < sa.size(); ++i) EXPECT_EQ(sa[i].vector, sb[i].vector);
}

TEST(RunItem, MissingContextIsRecordedAndBatchContinues) {
    Dataset d;
    d.ingest_manifest(test::fixture("closed_loop/manifest.jsonl"));
    DatasetItem orphan = *d.find("c0_2");
    orphan.item_id = "orphan";
    orphan.label = "no_train_items";
    d.add_item(orphan);

    VectorStore store;
    ReferenceEmbedder embedder;
    StubSegmenter segmenter;
    auto vlm = ScriptedVlmClient::from_file(test::fixture("closed_loop/vlm_echo.json"));
    index_dataset(d, store, embedder, segmenter, vlm.get());
    // the orphan's label must win the vote for context assembly to fail
    auto image = load_image(orphan.image_path);
    auto crop = embedder.embed_image(crop_product(image, segment(segmenter, image)));
    for (std::string ghost : {"g1", "g2", "g3"}) store.add(crop, "no_train_items", ghost);

    std::vector<const DatasetItem*> items{d.find("orphan"), d.find("c1_2")};
    PipelineConfig config;
    std::vector<std::string> sink;
    auto results = run_batch(items, store, d, {embedder, segmenter, *vlm}, config,
                             [&](const ItemResult& r) { sink.push_back(r.item_id); });
    ASSERT_EQ(results.size(), 2u);
    ASSERT_TRUE(results[0].error);
    EXPECT_EQ(results[0].error->kind, "NoContextAvailable");
    EXPECT_EQ(results[0].error->stage, "context");
    EXPECT_TRUE(results[1].ok());
    EXPECT_EQ(sink, (std::vector<std::string>{"orphan", "c1_2"}));
}

TEST(RunItem, TraceJsonRoundTrip) {
    auto run = test::run_closed_loop("vlm_null_retry.json");
    for (const auto& r : run.results) {
        auto j = to_json(r);
        EXPECT_TRUE(j.contains("meta"));
        auto back = item_result_from_json(json::parse(j.dump()));
        EXPECT_EQ(to_json(back), j);
        EXPECT_EQ(back.trace->prediction, r.trace->prediction);
        EXPECT_EQ(back.outcome->hits, r.outcome->hits);
    }
}

TEST(Index, ToyManifestGivesSixAndSix) {
    Dataset d;
    d.ingest_manifest(test::fixture("toy/manifest.jsonl"));
    VectorStore store;
    ReferenceEmbedder embedder;
    StubSegmenter segmenter;
    auto vlm = ScriptedVlmClient::from_file(test::fixture("toy/vlm_describe.json"));
    auto report = index_dataset(d, store, embedder, segmenter, vlm.get());
    EXPECT_EQ(report.items_seen, 6u);
    EXPECT_EQ(report.image_embeddings, 6u);
    EXPECT_EQ(report.text_embeddings, 6u);
    EXPECT_EQ(store.count(Modality::image), 6u);
    EXPECT_EQ(store.count(Modality::text), 6u);
    EXPECT_TRUE(report.failures.empty());
}

TEST(Index, ExtractionFailureKeepsImageEmbedding) {
    Dataset d;
    d.ingest_manifest(test::fixture("toy/manifest.jsonl"));
    VectorStore store;
    ReferenceEmbedder embedder;
    StubSegmenter segmenter;
    ScriptedVlmClient broken(json{{"default", {{"fail", "timeout"}}}});
    auto report = index_dataset(d, store, embedder, segmenter, &broken);
    EXPECT_EQ(report.image_embeddings, 6u);
    EXPECT_EQ(report.text_embeddings, 0u);
    EXPECT_EQ(report.failures.size(), 6u);
}
