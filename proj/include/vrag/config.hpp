#pragma once

#include "vrag/embed.hpp"
#include "vrag/eval.hpp"
#include "vrag/preprocess.hpp"
#include "vrag/vlm.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

namespace vrag {

/// Environment variable holding the bearer token for remote services.
inline constexpr const char* kApiKeyEnv = "VRAG_API_KEY";

/**
 * Settings for one CLI run.
 *
 * Client specs: embedder "reference" | "remote:<url>", segmenter
 * "stub" | "remote:<url>", vlm "mock:<script.json>" | "remote:<url>".
 */
struct RunConfig {
    std::string name = "run";
    std::filesystem::path manifest;
    std::filesystem::path snapshot;
    std::filesystem::path traces;
    std::filesystem::path report;

    std::string embedder = "reference";
    std::size_t embedding_dimension = 64;
    std::string segmenter = "stub";
    std::string vlm;
    std::string vlm_model = "gpt-4o-mini";

    std::size_t k = 5;
    std::size_t max_samples = 3;
    std::uint64_t token_budget = 128000;
    std::uint64_t image_tokens = 25000;
    std::size_t workers = 1;
    std::size_t max_in_flight = 4;
    std::uint64_t timeout_ms = 60000;
    std::size_t transport_retries = 2;

    eval::PriceTable prices;
    eval::GtinRule gtin_metric = eval::GtinRule::exact_set;

    /// Throws ConfigError when k, max_samples, or the budget is out of range.
    void validate() const;
};

/// Reads a JSON config; relative paths resolve against `base_dir`.
/// Unknown keys are rejected. Throws ConfigError.
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

struct ClientSet {
    std::unique_ptr<Embedder> embedder;
    std::unique_ptr<Segmenter> segmenter;
    /// Null when no VLM is configured.
    std::unique_ptr<VlmClient> vlm;
};

/// Builds clients from the specs. Remote clients share one in-flight limiter
/// and read the API key from kApiKeyEnv. Throws ConfigError.
ClientSet make_clients(const RunConfig& config);

} // namespace vrag
