#include "vrag/config.hpp"

#include "vrag/errors.hpp"

#include <cstdlib>
#include <fstream>

namespace vrag {

using nlohmann::json;

void RunConfig::validate() const {
    if (k < 1) throw ConfigError("k must be >= 1");
    if (max_samples < 1) throw ConfigError("max_samples must be >= 1");
    if (token_budget == 0) throw ConfigError("token budget must be > 0");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
    if (prices.per_input_token < 0 || prices.per_output_token < 0) throw ConfigError("prices must be >= 0");
}

namespace {

std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base) {
    std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

std::string resolve_spec(const std::string& spec, const std::filesystem::path& base) {
    // mock:<relative path> is resolved like any other path.
    if (spec.rfind("mock:", 0) == 0) return "mock:" + resolve(spec.substr(5), base).string();
    return spec;
}

} // namespace

RunConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    RunConfig c;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "name") c.name = v.get<std::string>();
            else if (key == "manifest") c.manifest = resolve(v.get<std::string>(), base_dir);
            else if (key == "snapshot") c.snapshot = resolve(v.get<std::string>(), base_dir);
            else if (key == "traces") c.traces = resolve(v.get<std::string>(), base_dir);
            else if (key == "report") c.report = resolve(v.get<std::string>(), base_dir);
            else if (key == "embedder") c.embedder = v.get<std::string>();
            else if (key == "embedding_dimension") c.embedding_dimension = v.get<std::size_t>();
            else if (key == "segmenter") c.segmenter = v.get<std::string>();
            else if (key == "vlm") c.vlm = resolve_spec(v.get<std::string>(), base_dir);
            else if (key == "vlm_model") c.vlm_model = v.get<std::string>();
            else if (key == "k") c.k = v.get<std::size_t>();
            else if (key == "max_samples") c.max_samples = v.get<std::size_t>();
            else if (key == "token_budget") c.token_budget = v.get<std::uint64_t>();
            else if (key == "image_tokens") c.image_tokens = v.get<std::uint64_t>();
            else if (key == "workers") c.workers = v.get<std::size_t>();
            else if (key == "max_in_flight") c.max_in_flight = v.get<std::size_t>();
            else if (key == "timeout_ms") c.timeout_ms = v.get<std::uint64_t>();
            else if (key == "transport_retries") c.transport_retries = v.get<std::size_t>();
            else if (key == "price_per_input_token") c.prices.per_input_token = v.get<double>();
            else if (key == "price_per_output_token") c.prices.per_output_token = v.get<double>();
            else if (key == "gtin_metric") c.gtin_metric = eval::parse_gtin_rule(v.get<std::string>());
            else throw ConfigError("unknown config key \"" + key + "\"");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path.string());
    return config_from_json(j, path.parent_path());
}

ClientSet make_clients(const RunConfig& config) {
    ClientSet set;
    std::shared_ptr<HttpTransport> transport;
    auto remote = [&]() {
        if (!transport) {
            HttpOptions options;
            options.timeout = std::chrono::milliseconds(config.timeout_ms);
            if (const char* key = std::getenv(kApiKeyEnv)) options.bearer_token = key;
            options.limiter = std::make_shared<InFlightLimiter>(static_cast<std::ptrdiff_t>(config.max_in_flight));
            transport = std::make_shared<HttplibTransport>(std::move(options));
        }
        return transport;
    };
    auto url_of = [](const std::string& spec) { return spec.substr(spec.find(':') + 1); };

    if (config.embedder == "reference")
        set.embedder = std::make_unique<ReferenceEmbedder>(config.embedding_dimension);
    else if (config.embedder.rfind("remote:", 0) == 0)
        set.embedder = std::make_unique<RemoteEmbedder>(remote(), url_of(config.embedder), config.embedding_dimension);
    else
        throw ConfigError("unknown embedder \"" + config.embedder + "\"");

    if (config.segmenter == "stub")
        set.segmenter = std::make_unique<StubSegmenter>();
    else if (config.segmenter.rfind("remote:", 0) == 0)
        set.segmenter = std::make_unique<RemoteSegmenter>(remote(), url_of(config.segmenter));
    else
        throw ConfigError("unknown segmenter \"" + config.segmenter + "\"");

    if (config.vlm.empty()) {
        // no model configured
    } else if (config.vlm.rfind("mock:", 0) == 0) {
        auto client = ScriptedVlmClient::from_file(url_of(config.vlm));
        client->set_recording(false);
        set.vlm = std::move(client);
    } else if (config.vlm.rfind("remote:", 0) == 0) {
        set.vlm = std::make_unique<RemoteVlmClient>(remote(), url_of(config.vlm), config.vlm_model);
    } else {
        throw ConfigError("unknown vlm \"" + config.vlm + "\"");
    }
    return set;
}

} // namespace vrag
