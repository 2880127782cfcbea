#pragma once

#include "vrag/http.hpp"
#include "vrag/image.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace vrag {

/// What a prompt part contributes; only the client-side mock looks at it.
enum class PartRole { task, context_image, context_record, query_image, instruction };

struct PromptPart {
    enum class Kind { text, image };

    Kind kind = Kind::text;
    PartRole role = PartRole::task;
    std::string text;
    std::shared_ptr<const Image> image;
    /// Item id (or "query") that an image part shows.
    std::string source;

    static PromptPart make_text(PartRole role, std::string text) {
        return {Kind::text, role, std::move(text), nullptr, {}};
    }
    static PromptPart make_image(PartRole role, std::shared_ptr<const Image> image, std::string source) {
        return {Kind::image, role, {}, std::move(image), std::move(source)};
    }
};

struct TokenUsage {
    std::uint64_t input_tokens = 0;
    std::uint64_t output_tokens = 0;
};

struct VlmRequest {
    /// Optional system message.
    std::string system;
    /// The user turn, in order.
    std::vector<PromptPart> parts;
    /// Structured-output descriptor; absent for free-text requests.
    std::optional<nlohmann::json> schema;

    // Bookkeeping that never goes on the wire.
    std::string query_item_id;
    std::size_t context_samples = 0;
};

struct VlmReply {
    /// JSON object text for structured requests, plain text otherwise.
    std::string content;
    TokenUsage usage;
};

/// A vision-language model endpoint. Implementations throw TransportError.
class VlmClient {
public:
    virtual ~VlmClient() = default;
    virtual VlmReply send(const VlmRequest& request) = 0;
};

/// JSON body a remote model endpoint receives:
///   {"model", "messages": [{"role", "content": [{"type": "text", "text"} |
///    {"type": "image", "media_type": "image/png", "data": base64}]}], "schema"?}
nlohmann::json vlm_wire_request(const VlmRequest& request, const std::string& model);

/// Reads {<fields...>, "usage": {"input_tokens", "output_tokens"}} or
/// {"text": ..., "usage": ...}. Bodies that are not JSON objects are passed
/// through as content so the caller can report them.
VlmReply vlm_wire_reply(const std::string& body);

class RemoteVlmClient final : public VlmClient {
public:
    RemoteVlmClient(std::shared_ptr<HttpTransport> transport, std::string url, std::string model);
    VlmReply send(const VlmRequest& request) override;

private:
    std::shared_ptr<HttpTransport> transport_;
    std::string url_;
    std::string model_;
};

/**
 * Deterministic stand-in for a model, scripted per query item.
 *
 * Script (JSON):
 *   {"default": <entry>, "items": {"<item_id>": <entry>, ...}}
 * Entry keys, all optional:
 *   "prediction"         structured reply (Prediction field names)
 *   "echo_context"       true: reply with the first context record
 *   "raw"                reply text verbatim
 *   "null_above_samples" n: all-null reply while the prompt has > n samples
 *   "description"        reply to free-text (extraction) requests
 *   "fail"               message; the call throws TransportError
 *   "fail_times"         with "fail": only the first n calls fail
 *   "usage"              {"input_tokens", "output_tokens"}
 * Without "usage", input tokens are ceil(text bytes / 4) plus
 * "image_tokens" (top level, default 25000) per image; output tokens are
 * ceil(reply bytes / 4).
 */
class ScriptedVlmClient final : public VlmClient {
public:
    explicit ScriptedVlmClient(nlohmann::json script);
    /// Throws ConfigError.
    static std::unique_ptr<ScriptedVlmClient> from_file(const std::filesystem::path& path);

    VlmReply send(const VlmRequest& request) override;

    std::size_t call_count() const;
    /// Requests seen so far; empty when recording is off.
    std::vector<VlmRequest> requests() const;
    void set_recording(bool on);

private:
    const nlohmann::json* entry_for(const std::string& item_id) const;

    nlohmann::json script_;
    std::uint64_t image_tokens_ = 25000;
    mutable std::mutex mutex_;
    std::map<std::string, std::size_t> failures_;
    std::vector<VlmRequest> requests_;
    std::size_t calls_ = 0;
    bool recording_ = true;
};

} // namespace vrag
