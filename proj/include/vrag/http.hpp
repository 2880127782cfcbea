#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <semaphore>
#include <string>
#include <utility>
#include <vector>

namespace vrag {

struct HttpRequest {
    std::string url;
    std::string body;
    std::vector<std::pair<std::string, std::string>> headers;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Synchronous JSON-over-HTTP POST. Implementations throw TransportError on
/// connection failure or timeout; non-2xx statuses are returned, not thrown.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const HttpRequest& request) = 0;
};

/// Caps concurrent requests across every client that shares it.
class InFlightLimiter {
public:
    explicit InFlightLimiter(std::ptrdiff_t limit) : slots_(limit) {}

    class Slot {
    public:
        explicit Slot(InFlightLimiter& owner) : owner_(&owner) { owner_->slots_.acquire(); }
        ~Slot() {
            if (owner_) owner_->slots_.release();
        }
        Slot(const Slot&) = delete;
        Slot& operator=(const Slot&) = delete;

    private:
        InFlightLimiter* owner_;
    };

    Slot acquire() { return Slot(*this); }

private:
    std::counting_semaphore<> slots_;
};

struct HttpOptions {
    std::chrono::milliseconds timeout{60000};
    /// Sent as "Authorization: Bearer <token>" when non-empty.
    std::string bearer_token;
    std::shared_ptr<InFlightLimiter> limiter;
};

/// cpp-httplib backed transport. Accepts http:// URLs (https:// when the
/// library is built with OpenSSL support).
class HttplibTransport final : public HttpTransport {
public:
    explicit HttplibTransport(HttpOptions options = {}) : options_(std::move(options)) {}
    HttpResponse post(const HttpRequest& request) override;

private:
    HttpOptions options_;
};

/// Splits "scheme://host[:port]/path?q" into ("scheme://host[:port]", "/path?q").
std::pair<std::string, std::string> split_url(const std::string& url);

namespace testing {

/// In-memory transport that replays queued responses and records requests.
class MockTransport final : public HttpTransport {
public:
    using Handler = std::function<HttpResponse(const HttpRequest&)>;

    HttpResponse post(const HttpRequest& request) override;

    void enqueue_response(HttpResponse response);
    /// Queued failure: post() throws TransportError with this message.
    void enqueue_error(std::string message);
    /// Used once the queue is empty.
    void set_handler(Handler handler);

    std::vector<HttpRequest> requests() const;
    std::size_t call_count() const;

private:
    struct Entry {
        std::optional<HttpResponse> response;
        std::string error;
    };

    mutable std::mutex mutex_;
    std::queue<Entry> queue_;
    Handler handler_;
    std::vector<HttpRequest> requests_;
};

} // namespace testing

} // namespace vrag
