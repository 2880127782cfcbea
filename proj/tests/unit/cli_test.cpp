#include "test_support.hpp"

#include "vrag/cli.hpp"
#include "vrag/config.hpp"
#include "vrag/errors.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace vrag;
using nlohmann::json;

namespace {

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult cli(std::vector<std::string> args) {
    args.insert(args.begin(), "vrag");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<json> read_jsonl(const std::filesystem::path& p) {
    std::vector<json> out;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) out.push_back(json::parse(line));
    return out;
}

json without_meta(json j) {
    j.erase("meta");
    return j;
}

const std::string kManifest = test::fixture("closed_loop/manifest.jsonl").string();
const std::string kEcho = "mock:" + test::fixture("closed_loop/vlm_echo.json").string();

/// ingest -> index -> run -> evaluate into `dir`.
void full_run(const test::TempDir& dir) {
    auto snap = (dir / "store.bin").string(), traces = (dir / "traces.jsonl").string();
    ASSERT_EQ(cli({"index", "--manifest", kManifest, "--snapshot", snap, "--vlm", kEcho}).code, 0);
    ASSERT_EQ(cli({"run", "--manifest", kManifest, "--snapshot", snap, "--vlm", kEcho, "--traces", traces}).code, 0);
    ASSERT_EQ(cli({"evaluate", "--manifest", kManifest, "--traces", traces, "--report", (dir / "report.json").string(),
                   "--name", "echo"})
                  .code,
              0);
}

} // namespace

TEST(Cli, IngestPrintsStats) {
    auto r = cli({"ingest", "--manifest", kManifest});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("items 12"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("classes 4"), std::string::npos) << r.out;
}

TEST(Cli, IngestMissingFileFails) {
    auto r = cli({"ingest", "--manifest", "/nonexistent/m.jsonl"});
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("cannot open"), std::string::npos) << r.err;
}

TEST(Cli, IngestNamesMalformedLine) {
    test::TempDir dir;
    std::ifstream in(kManifest);
    std::ofstream out(dir / "m.jsonl");
    std::string line;
    for (int i = 1; std::getline(in, line); ++i) out << (i == 7 ? "{\"item_id\": 7," : line) << '\n';
    out.close();
    for (const char* img : {"images"}) std::filesystem::create_directory_symlink(test::fixture("closed_loop") / img, dir / img);
    auto r = cli({"ingest", "--manifest", (dir / "m.jsonl").string()});
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("line 7"), std::string::npos) << r.err;
}

TEST(Cli, UsageErrors) {
    EXPECT_NE(cli({}).code, 0);
    EXPECT_NE(cli({"frobnicate"}).code, 0);
    EXPECT_NE(cli({"ingest", "--k", "zero"}).code, 0);
    auto r = cli({"ingest", "--manifest", kManifest, "--k", "0"});
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.err.find("k must be"), std::string::npos) << r.err;
    EXPECT_NE(cli({"index", "--manifest", kManifest}).code, 0);
    EXPECT_NE(cli({"run", "--manifest", kManifest, "--gtin-metric", "fuzzy"}).code, 0);
    EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, ToyIndexCountsByModality) {
    test::TempDir dir;
    auto r = cli({"index", "--manifest", test::fixture("toy/manifest.jsonl").string(), "--snapshot",
                  (dir / "s.bin").string(), "--vlm", "mock:" + test::fixture("toy/vlm_describe.json").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("6 image + 6 text"), std::string::npos) << r.out;
    auto store = VectorStore::restore(dir / "s.bin");
    EXPECT_EQ(store.count(Modality::image), 6u);
    EXPECT_EQ(store.count(Modality::text), 6u);
}

TEST(Cli, IndexWarnsWhenExtractionFails) {
    test::TempDir dir;
    std::ofstream(dir / "broken.json") << R"({"default": {"fail": "timeout"}})";
    auto r = cli({"index", "--manifest", test::fixture("toy/manifest.jsonl").string(), "--snapshot",
                  (dir / "s.bin").string(), "--vlm", "mock:" + (dir / "broken.json").string()});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("6 image + 0 text"), std::string::npos) << r.out;
    EXPECT_NE(r.err.find("warning"), std::string::npos);
    EXPECT_NE(r.err.find("image-only"), std::string::npos) << r.err;
}

TEST(Cli, ClosedLoopEndToEnd) {
    test::TempDir dir;
    full_run(dir);
    auto traces = read_jsonl(dir / "traces.jsonl");
    EXPECT_EQ(traces.size(), 4u);
    auto report = json::parse(read_file(dir / "report.json"));
    for (const auto& t : report["targets"]) EXPECT_EQ(t["n_correct"], t["n_total"]) << t;
    for (const auto& [rule, v] : report["gtin_metrics"].items()) EXPECT_EQ(v["n_correct"], 4) << rule;

    auto table = cli({"report", (dir / "report.json").string(), (dir / "report.json").string()});
    EXPECT_EQ(table.code, 0);
    EXPECT_NE(table.out.find("100.0%"), std::string::npos) << table.out;
}

TEST(Cli, RunResumesFromExistingTraces) {
    test::TempDir dir;
    full_run(dir);
    auto before = read_file(dir / "traces.jsonl");
    auto r = cli({"run", "--manifest", kManifest, "--snapshot", (dir / "store.bin").string(), "--vlm", kEcho,
                  "--traces", (dir / "traces.jsonl").string()});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("ran 0 test items (4 already traced)"), std::string::npos) << r.out;
    EXPECT_EQ(read_file(dir / "traces.jsonl"), before);

    // drop the last trace; only that item is run again
    auto lines = read_jsonl(dir / "traces.jsonl");
    {
        std::ofstream out(dir / "traces.jsonl", std::ios::trunc);
        for (std::size_t i = 0; i + 1 < lines.size(); ++i) out << lines[i].dump() << '\n';
    }
    r = cli({"run", "--manifest", kManifest, "--snapshot", (dir / "store.bin").string(), "--vlm", kEcho, "--traces",
             (dir / "traces.jsonl").string()});
    EXPECT_NE(r.out.find("ran 1 test items"), std::string::npos) << r.out;
    auto again = read_jsonl(dir / "traces.jsonl");
    ASSERT_EQ(again.size(), 4u);
    EXPECT_EQ(without_meta(again.back()), without_meta(lines.back()));
}

TEST(Cli, RerunsAreByteIdenticalOutsideMeta) {
    test::TempDir a, b;
    full_run(a);
    full_run(b);
    EXPECT_EQ(read_file(a / "store.bin"), read_file(b / "store.bin"));
    auto ta = read_jsonl(a / "traces.jsonl"), tb = read_jsonl(b / "traces.jsonl");
    ASSERT_EQ(ta.size(), tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(without_meta(ta[i]).dump(), without_meta(tb[i]).dump());
    auto ra = json::parse(read_file(a / "report.json")), rb = json::parse(read_file(b / "report.json"));
    EXPECT_EQ(without_meta(ra).dump(), without_meta(rb).dump());
}

TEST(Cli, ItemErrorsAreTracedAndBatchCompletes) {
    test::TempDir dir;
    auto snap = (dir / "s.bin").string();
    ASSERT_EQ(cli({"index", "--manifest", kManifest, "--snapshot", snap, "--vlm", kEcho}).code, 0);
    std::ofstream(dir / "down.json") << R"({"items": {"c1_2": {"fail": "connection refused"}},
                                           "default": {"echo_context": true}})";
    auto r = cli({"run", "--manifest", kManifest, "--snapshot", snap, "--vlm", "mock:" + (dir / "down.json").string(),
                  "--traces", (dir / "t.jsonl").string()});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.err.find("c1_2"), std::string::npos) << r.err;
    auto traces = read_jsonl(dir / "t.jsonl");
    ASSERT_EQ(traces.size(), 4u);
    EXPECT_EQ(traces[1]["error"]["kind"], "CompletionError");
    EXPECT_TRUE(traces[0]["error"].is_null());
}

TEST(Config, FileWithOverrides) {
    test::TempDir dir;
    std::ofstream(dir / "run.json") << json{{"name", "mini"},
                                            {"manifest", kManifest},
                                            {"snapshot", "store.bin"},
                                            {"vlm", "mock:script.json"},
                                            {"k", 7},
                                            {"gtin_metric", "any"},
                                            {"price_per_input_token", 0.15e-6},
                                            {"price_per_output_token", 0.6e-6}}
                                            .dump();
    auto c = load_config(dir / "run.json");
    EXPECT_EQ(c.name, "mini");
    EXPECT_EQ(c.snapshot, dir / "store.bin");
    EXPECT_EQ(c.vlm, "mock:" + (dir / "script.json").string());
    EXPECT_EQ(c.k, 7u);
    EXPECT_EQ(c.max_samples, 3u);
    EXPECT_EQ(c.token_budget, 128000u);
    EXPECT_EQ(c.gtin_metric, eval::GtinRule::any_match);
    EXPECT_DOUBLE_EQ(c.prices.per_output_token, 0.6e-6);

    EXPECT_THROW(config_from_json(json{{"api_key", "secret"}}, {}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"k", "five"}}, {}), ConfigError);
    EXPECT_THROW(config_from_json(json{{"max_samples", 0}}, {}), ConfigError);
    EXPECT_THROW(load_config(dir / "missing.json"), ConfigError);

    auto r = cli({"ingest", "--config", (dir / "run.json").string()});
    EXPECT_EQ(r.code, 0) << r.err;
}

TEST(Config, ClientSpecs) {
    RunConfig c;
    EXPECT_NO_THROW(make_clients(c));
    c.embedder = "clip";
    EXPECT_THROW(make_clients(c), ConfigError);
    c.embedder = "remote:http://127.0.0.1:9/embed";
    c.segmenter = "remote:http://127.0.0.1:9/segment";
    c.vlm = "remote:http://127.0.0.1:9/v1";
    auto set = make_clients(c);
    EXPECT_TRUE(set.vlm);
    c.vlm = "mock:/nonexistent.json";
    EXPECT_THROW(make_clients(c), ConfigError);
}
