#include "vrag/http.hpp"

#include "vrag/errors.hpp"

#include <httplib.h>

namespace vrag {

std::pair<std::string, std::string> split_url(const std::string& url) {
    auto scheme = url.find("://");
    if (scheme == std::string::npos) throw ConfigError("URL needs a scheme: " + url);
    auto path = url.find('/', scheme + 3);
    if (path == std::string::npos) return {url, "/"};
    return {url.substr(0, path), url.substr(path)};
}

HttpResponse HttplibTransport::post(const HttpRequest& request) {
    auto [base, path] = split_url(request.url);
    std::optional<InFlightLimiter::Slot> slot;
    if (options_.limiter) slot.emplace(*options_.limiter);

    httplib::Client client(base);
    auto ms = options_.timeout.count();
    client.set_connection_timeout(std::chrono::milliseconds(ms));
    client.set_read_timeout(std::chrono::milliseconds(ms));
    client.set_write_timeout(std::chrono::milliseconds(ms));
    if (!options_.bearer_token.empty()) client.set_bearer_token_auth(options_.bearer_token);

    httplib::Headers headers;
    for (const auto& [k, v] : request.headers) headers.emplace(k, v);
    auto result = client.Post(path, headers, request.body, "application/json");
    if (!result) throw TransportError(request.url + ": " + httplib::to_string(result.error()));
    return {result->status, result->body};
}

namespace testing {

HttpResponse MockTransport::post(const HttpRequest& request) {
    Entry next;
    Handler handler;
    {
        std::lock_guard lock(mutex_);
        requests_.push_back(request);
        if (queue_.empty()) {
            if (!handler_) throw TransportError("mock transport: no response queued");
            handler = handler_;
        } else {
            next = std::move(queue_.front());
            queue_.pop();
        }
    }
    if (handler) return handler(request);
    if (!next.response) throw TransportError(next.error);
    return *next.response;
}

void MockTransport::enqueue_response(HttpResponse response) {
    std::lock_guard lock(mutex_);
    queue_.push(Entry{std::move(response), {}});
}

void MockTransport::enqueue_error(std::string message) {
    std::lock_guard lock(mutex_);
    queue_.push(Entry{std::nullopt, std::move(message)});
}

void MockTransport::set_handler(Handler handler) {
    std::lock_guard lock(mutex_);
    handler_ = std::move(handler);
}

std::vector<HttpRequest> MockTransport::requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
}

std::size_t MockTransport::call_count() const {
    std::lock_guard lock(mutex_);
    return requests_.size();
}

} // namespace testing

} // namespace vrag
