#include "vrag/cli.hpp"

#include "vrag/config.hpp"
#include "vrag/dataset.hpp"
#include "vrag/errors.hpp"
#include "vrag/eval.hpp"
#include "vrag/pipeline.hpp"
#include "vrag/vstore.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace vrag {

using nlohmann::json;

namespace {

struct Overrides {
    std::string config;
    std::string manifest, snapshot, traces, report, name;
    std::optional<std::size_t> k, max_samples, workers;
    std::optional<std::uint64_t> budget;
    std::optional<std::string> gtin_metric, embedder, segmenter, vlm;

    void attach(CLI::App& cmd) {
        cmd.add_option("--config", config, "JSON config file");
        cmd.add_option("--manifest", manifest, "JSONL dataset manifest");
        cmd.add_option("--snapshot", snapshot, "vector store snapshot path");
        cmd.add_option("--traces", traces, "JSONL traces path");
        cmd.add_option("--report", report, "JSON report output path");
        cmd.add_option("--name", name, "configuration name used as report column");
        cmd.add_option("--k", k, "retrieved neighbours");
        cmd.add_option("--max-samples", max_samples, "few-shot samples per prompt");
        cmd.add_option("--budget", budget, "input token budget");
        cmd.add_option("--workers", workers, "parallel items");
        cmd.add_option("--gtin-metric", gtin_metric, "exact_set | union | any");
        cmd.add_option("--embedder", embedder, "reference | remote:<url>");
        cmd.add_option("--segmenter", segmenter, "stub | remote:<url>");
        cmd.add_option("--vlm", vlm, "mock:<script.json> | remote:<url>");
    }

    RunConfig resolve() const {
        RunConfig c = config.empty() ? RunConfig{} : load_config(config);
        if (!manifest.empty()) c.manifest = manifest;
        if (!snapshot.empty()) c.snapshot = snapshot;
        if (!traces.empty()) c.traces = traces;
        if (!report.empty()) c.report = report;
        if (!name.empty()) c.name = name;
        if (k) c.k = *k;
        if (max_samples) c.max_samples = *max_samples;
        if (workers) c.workers = *workers;
        if (budget) c.token_budget = *budget;
        if (gtin_metric) c.gtin_metric = eval::parse_gtin_rule(*gtin_metric);
        if (embedder) c.embedder = *embedder;
        if (segmenter) c.segmenter = *segmenter;
        if (vlm) c.vlm = *vlm;
        c.validate();
        return c;
    }
};

void require(const std::filesystem::path& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string("missing ") + what);
}

Dataset load_dataset(const RunConfig& c) {
    require(c.manifest, "--manifest");
    Dataset d;
    d.ingest_manifest(c.manifest);
    return d;
}

std::vector<ItemResult> read_traces(const std::filesystem::path& path) {
    std::vector<ItemResult> out;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open traces " + path.string());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw SchemaError("traces line " + std::to_string(n) + " is not JSON");
        out.push_back(item_result_from_json(j));
    }
    return out;
}

void write_json(const json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    out << j.dump(2) << '\n';
    if (!out) throw ConfigError("cannot write " + path.string());
}

int cmd_ingest(const RunConfig& c, std::ostream& out) {
    auto d = load_dataset(c);
    auto s = d.stats();
    out << "items " << s.n_items << " (train " << s.n_train << ", test " << s.n_test << "), classes " << s.n_classes
        << '\n';
    return 0;
}

int cmd_index(const RunConfig& c, std::ostream& out, std::ostream& err) {
    require(c.snapshot, "--snapshot");
    auto d = load_dataset(c);
    auto clients = make_clients(c);
    VectorStore store;
    IndexOptions options;
    options.workers = c.workers;
    auto report = index_dataset(d, store, *clients.embedder, *clients.segmenter, clients.vlm.get(), options);
    for (const auto& f : report.failures) err << "warning: " << f.item_id << " [" << f.stage << "] " << f.message << '\n';
    if (report.text_embeddings == 0 && report.image_embeddings > 0)
        err << "warning: no description texts were indexed; the store is image-only\n";
    out << "indexed " << report.items_seen << " train items: " << report.image_embeddings << " image + "
        << report.text_embeddings << " text embeddings";
    if (report.empty_masks) out << ", " << report.empty_masks << " empty masks";
    out << '\n';
    if (store.size() == 0) {
        err << "error: nothing was indexed\n";
        return 1;
    }
    store.snapshot(c.snapshot);
    return 0;
}

int cmd_run(const RunConfig& c, std::ostream& out, std::ostream& err) {
    require(c.snapshot, "--snapshot");
    require(c.traces, "--traces");
    auto d = load_dataset(c);
    auto store = VectorStore::restore(c.snapshot);
    auto clients = make_clients(c);
    if (!clients.vlm) throw ConfigError("run needs --vlm");

    std::set<std::string> done;
    if (std::filesystem::exists(c.traces))
        for (const auto& r : read_traces(c.traces)) done.insert(r.item_id);

    std::vector<const DatasetItem*> todo;
    for (const auto* item : d.test_items())
        if (!done.contains(item->item_id)) todo.push_back(item);

    PipelineConfig pc;
    pc.k = c.k;
    pc.max_samples = c.max_samples;
    pc.token_budget = c.token_budget;
    pc.prompt.image_tokens = c.image_tokens;
    pc.completion.transport_retries = c.transport_retries;
    pc.workers = c.workers;

    std::ofstream sink(c.traces, std::ios::app);
    if (!sink) throw ConfigError("cannot write traces " + c.traces.string());
    std::size_t errors = 0;
    PipelineClients pipeline_clients{*clients.embedder, *clients.segmenter, *clients.vlm};
    run_batch(todo, store, d, pipeline_clients, pc, [&](const ItemResult& r) {
        sink << to_json(r).dump() << '\n';
        sink.flush();
        if (r.error) {
            ++errors;
            err << "item " << r.item_id << " failed at " << r.error->stage << ": " << r.error->message << '\n';
        }
    });
    out << "ran " << todo.size() << " test items (" << done.size() << " already traced), " << errors << " errors\n";
    return 0;
}

int cmd_evaluate(const RunConfig& c, std::ostream& out) {
    require(c.traces, "--traces");
    auto d = load_dataset(c);
    auto traces = read_traces(c.traces);
    auto card = eval::score_run(traces, d, {c.gtin_metric});
    auto cost = eval::cost_report(std::span<const ItemResult>(traces), c.prices);
    auto report = eval::report_json(c.name, card, cost, c.gtin_metric);
    json alternatives = json::object();
    for (auto rule : {eval::GtinRule::exact_set, eval::GtinRule::union_membership, eval::GtinRule::any_match}) {
        auto alt = eval::score_run(traces, d, {rule});
        const auto* g = alt.find("GTINs");
        alternatives[std::string(eval::to_string(rule))] = {
            {"n_correct", g->n_correct}, {"n_total", g->n_total}, {"accuracy", g->accuracy()}};
    }
    report["gtin_metrics"] = std::move(alternatives);
    if (!c.report.empty()) write_json(report, c.report);

    std::vector<std::pair<std::string, json>> one{{c.name, report}};
    out << eval::render_table(one);
    out << "GTINs by metric:";
    for (const auto& [rule, v] : report["gtin_metrics"].items())
        out << "  " << rule << " " << v["n_correct"].get<std::size_t>() << "/" << v["n_total"].get<std::size_t>();
    out << '\n';
    return 0;
}

int cmd_report(const std::vector<std::string>& files, std::ostream& out) {
    std::vector<std::pair<std::string, json>> reports;
    for (const auto& f : files) {
        std::ifstream in(f);
        if (!in) throw ConfigError("cannot open report " + f);
        json j = json::parse(in, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw ConfigError("not a JSON report: " + f);
        reports.emplace_back(j.value("config", f), std::move(j));
    }
    out << eval::render_table(reports);
    return 0;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Retrieval-augmented product classification for retail advertisements", "vrag"};
    app.require_subcommand(1);

    Overrides ingest_o, index_o, run_o, eval_o;
    auto* ingest = app.add_subcommand("ingest", "load a manifest and print dataset statistics");
    ingest_o.attach(*ingest);
    auto* index = app.add_subcommand("index", "preprocess and embed train items into a snapshot");
    index_o.attach(*index);
    auto* run = app.add_subcommand("run", "classify and complete every test item, appending JSONL traces");
    run_o.attach(*run);
    auto* evaluate = app.add_subcommand("evaluate", "score traces per target and report token cost");
    eval_o.attach(*evaluate);
    auto* report = app.add_subcommand("report", "render evaluation reports side by side");
    std::vector<std::string> report_files;
    report->add_option("reports", report_files, "JSON reports written by evaluate")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, e2;
        int code = app.exit(e, o, e2);
        out << o.str();
        err << e2.str();
        return code;
    }

    try {
        if (*ingest) return cmd_ingest(ingest_o.resolve(), out);
        if (*index) return cmd_index(index_o.resolve(), out, err);
        if (*run) return cmd_run(run_o.resolve(), out, err);
        if (*evaluate) return cmd_evaluate(eval_o.resolve(), out);
        if (*report) return cmd_report(report_files, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

} // namespace vrag
