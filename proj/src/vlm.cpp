#include "vrag/vlm.hpp"

#include "vrag/errors.hpp"
#include "vrag/records.hpp"

#include <fstream>
#include <limits>

namespace vrag {

using nlohmann::json;

namespace {

std::uint64_t text_tokens(std::size_t bytes) { return (bytes + 3) / 4; }

json text_part(const std::string& text) { return {{"type", "text"}, {"text", text}}; }

} // namespace

json vlm_wire_request(const VlmRequest& request, const std::string& model) {
    json messages = json::array();
    if (!request.system.empty())
        messages.push_back({{"role", "system"}, {"content", json::array({text_part(request.system)})}});
    json content = json::array();
    for (const auto& part : request.parts) {
        if (part.kind == PromptPart::Kind::text) {
            content.push_back(text_part(part.text));
        } else {
            if (!part.image) throw CompletionError("image part without pixels");
            content.push_back(
                {{"type", "image"}, {"media_type", "image/png"}, {"data", base64_encode(encode_png(*part.image))}});
        }
    }
    messages.push_back({{"role", "user"}, {"content", std::move(content)}});
    json body = {{"model", model}, {"messages", std::move(messages)}};
    if (request.schema) body["schema"] = *request.schema;
    return body;
}

VlmReply vlm_wire_reply(const std::string& body) {
    VlmReply reply;
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        reply.content = body;
        return reply;
    }
    if (auto it = j.find("usage"); it != j.end()) {
        if (it->is_object()) {
            reply.usage.input_tokens = it->value("input_tokens", std::uint64_t{0});
            reply.usage.output_tokens = it->value("output_tokens", std::uint64_t{0});
        }
        j.erase(it);
    }
    if (auto it = j.find("text"); it != j.end() && it->is_string() && j.size() == 1)
        reply.content = it->get<std::string>();
    else
        reply.content = j.dump();
    return reply;
}

RemoteVlmClient::RemoteVlmClient(std::shared_ptr<HttpTransport> transport, std::string url, std::string model)
    : transport_(std::move(transport)), url_(std::move(url)), model_(std::move(model)) {
    if (!transport_) throw ConfigError("remote VLM client needs a transport");
}

VlmReply RemoteVlmClient::send(const VlmRequest& request) {
    auto response = transport_->post({url_, vlm_wire_request(request, model_).dump(), {}});
    if (response.status < 200 || response.status >= 300)
        throw TransportError("VLM endpoint returned HTTP " + std::to_string(response.status), response.status);
    return vlm_wire_reply(response.body);
}

ScriptedVlmClient::ScriptedVlmClient(json script) : script_(std::move(script)) {
    if (!script_.is_object()) throw ConfigError("mock VLM script must be a JSON object");
    if (script_.contains("items") && !script_["items"].is_object())
        throw ConfigError("mock VLM script: \"items\" must be an object");
    image_tokens_ = script_.value("image_tokens", std::uint64_t{25000});
}

std::unique_ptr<ScriptedVlmClient> ScriptedVlmClient::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open mock VLM script " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("mock VLM script is not valid JSON: " + path.string());
    return std::make_unique<ScriptedVlmClient>(std::move(j));
}

const json* ScriptedVlmClient::entry_for(const std::string& item_id) const {
    if (auto items = script_.find("items"); items != script_.end())
        if (auto it = items->find(item_id); it != items->end()) return &*it;
    if (auto it = script_.find("default"); it != script_.end()) return &*it;
    return nullptr;
}

VlmReply ScriptedVlmClient::send(const VlmRequest& request) {
    const json* entry = entry_for(request.query_item_id);
    {
        std::lock_guard lock(mutex_);
        ++calls_;
        if (recording_) requests_.push_back(request);
        if (entry && entry->contains("fail")) {
            auto limit = entry->value("fail_times", std::numeric_limits<std::size_t>::max());
            auto& seen = failures_[request.query_item_id];
            if (seen < limit) {
                ++seen;
                throw TransportError((*entry)["fail"].get<std::string>());
            }
        }
    }
    if (!entry) throw TransportError("mock VLM: no script entry for \"" + request.query_item_id + "\"");

    VlmReply reply;
    if (!request.schema) {
        auto it = entry->find("description");
        if (it == entry->end() || !it->is_string())
            throw TransportError("mock VLM: no description scripted for \"" + request.query_item_id + "\"");
        reply.content = it->get<std::string>();
    } else if (request.context_samples > entry->value("null_above_samples", std::numeric_limits<std::size_t>::max())) {
        reply.content = to_json(Prediction{}).dump();
    } else if (entry->value("echo_context", false)) {
        for (const auto& part : request.parts)
            if (part.role == PartRole::context_record) {
                reply.content = part.text;
                break;
            }
    } else if (auto raw = entry->find("raw"); raw != entry->end()) {
        reply.content = raw->get<std::string>();
    } else if (auto pred = entry->find("prediction"); pred != entry->end()) {
        reply.content = pred->dump();
    } else {
        reply.content = to_json(Prediction{}).dump();
    }

    if (auto usage = entry->find("usage"); usage != entry->end()) {
        reply.usage.input_tokens = usage->value("input_tokens", std::uint64_t{0});
        reply.usage.output_tokens = usage->value("output_tokens", std::uint64_t{0});
    } else {
        std::uint64_t in = text_tokens(request.system.size());
        for (const auto& part : request.parts)
            in += part.kind == PromptPart::Kind::text ? text_tokens(part.text.size()) : image_tokens_;
        reply.usage.input_tokens = in;
        reply.usage.output_tokens = text_tokens(reply.content.size());
    }
    return reply;
}

std::size_t ScriptedVlmClient::call_count() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

void ScriptedVlmClient::set_recording(bool on) {
    std::lock_guard lock(mutex_);
    recording_ = on;
    if (!on) requests_.clear();
}

std::vector<VlmRequest> ScriptedVlmClient::requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
}

} // namespace vrag
