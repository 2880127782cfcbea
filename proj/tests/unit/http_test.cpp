#include "vrag/errors.hpp"
#include "vrag/http.hpp"
#include "vrag/records.hpp"
#include "vrag/vlm.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <thread>

using namespace vrag;
using nlohmann::json;

namespace {

/// httplib server on an ephemeral loopback port, stopped on destruction.
class LoopbackServer {
public:
    LoopbackServer() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LoopbackServer() {
        server_.stop();
        thread_.join();
    }
    httplib::Server& server() { return server_; }
    std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port_) + path; }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

} // namespace

TEST(Http, SplitUrl) {
    EXPECT_EQ(split_url("http://h:8080/v1/chat?x=1"), (std::pair<std::string, std::string>{"http://h:8080", "/v1/chat?x=1"}));
    EXPECT_EQ(split_url("http://h").second, "/");
    EXPECT_THROW(split_url("h/v1"), ConfigError);
}

TEST(Http, PostsJsonWithBearerToken) {
    LoopbackServer srv;
    std::string auth, body;
    srv.server().Post("/echo", [&](const httplib::Request& req, httplib::Response& res) {
        auth = req.get_header_value("Authorization");
        body = req.body;
        res.set_content(R"({"ok": true})", "application/json");
    });
    srv.server().Post("/missing", [](const httplib::Request&, httplib::Response& res) { res.status = 404; });

    HttplibTransport transport({std::chrono::milliseconds(2000), "tok123", nullptr});
    auto r = transport.post({srv.url("/echo"), R"({"a": 1})", {}});
    EXPECT_EQ(r.status, 200);
    EXPECT_EQ(json::parse(r.body)["ok"], true);
    EXPECT_EQ(auth, "Bearer tok123");
    EXPECT_EQ(body, R"({"a": 1})");
    EXPECT_EQ(transport.post({srv.url("/missing"), "{}", {}}).status, 404);
}

TEST(Http, TimeoutAndRefusalAreTransportErrors) {
    LoopbackServer srv;
    srv.server().Post("/slow", [](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(600));
        res.set_content("{}", "application/json");
    });
    HttplibTransport transport({std::chrono::milliseconds(100), {}, nullptr});
    EXPECT_THROW(transport.post({srv.url("/slow"), "{}", {}}), TransportError);
    EXPECT_THROW(transport.post({"http://127.0.0.1:1/x", "{}", {}}), TransportError);
}

TEST(Http, LimiterCapsConcurrentRequests) {
    LoopbackServer srv;
    std::atomic<int> active{0}, peak{0};
    srv.server().Post("/work", [&](const httplib::Request&, httplib::Response& res) {
        int now = ++active;
        int seen = peak.load();
        while (now > seen && !peak.compare_exchange_weak(seen, now)) {}
        std::this_thread::sleep_for(std::chrono::milliseconds(30));
        --active;
        res.set_content("{}", "application/json");
    });
    auto limiter = std::make_shared<InFlightLimiter>(2);
    HttplibTransport transport({std::chrono::milliseconds(5000), {}, limiter});
    {
        std::vector<std::jthread> clients;
        for (int i = 0; i < 6; ++i) clients.emplace_back([&] { transport.post({srv.url("/work"), "{}", {}}); });
    }
    EXPECT_LE(peak.load(), 2);
    EXPECT_GE(peak.load(), 1);
}

TEST(Http, RemoteVlmRoundTrip) {
    LoopbackServer srv;
    json seen;
    srv.server().Post("/v1", [&](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        res.set_content(R"({"brand": "Heinz", "GTINs": ["08715700017006"],
                           "usage": {"input_tokens": 92888, "output_tokens": 90}})",
                        "application/json");
    });
    auto transport = std::make_shared<HttplibTransport>(HttpOptions{std::chrono::milliseconds(2000), {}, nullptr});
    RemoteVlmClient client(transport, srv.url("/v1"), "gpt-4o-mini");
    VlmRequest req;
    req.system = "sys";
    req.parts.push_back(PromptPart::make_text(PartRole::task, "Extract all features"));
    req.parts.push_back(PromptPart::make_image(PartRole::query_image, std::make_shared<const Image>(2, 2, kWhite), "q"));
    req.schema = prediction_schema();
    auto reply = client.send(req);
    EXPECT_EQ(reply.usage.input_tokens, 92888u);
    EXPECT_EQ(reply.usage.output_tokens, 90u);
    auto p = parse_prediction(reply.content);
    EXPECT_EQ(p.brand, "Heinz");
    EXPECT_EQ(seen["model"], "gpt-4o-mini");
    EXPECT_TRUE(seen.contains("schema"));
    const auto& user = seen["messages"].back();
    EXPECT_EQ(user["content"][0]["text"], "Extract all features");
    EXPECT_EQ(user["content"][1]["type"], "image");
    EXPECT_EQ(user["content"][1]["media_type"], "image/png");
}

TEST(Http, RemoteVlmErrorStatusIsTransportError) {
    LoopbackServer srv;
    srv.server().Post("/v1", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    auto transport = std::make_shared<HttplibTransport>(HttpOptions{std::chrono::milliseconds(2000), {}, nullptr});
    RemoteVlmClient client(transport, srv.url("/v1"), "m");
    try {
        client.send({});
        FAIL();
    } catch (const TransportError& e) {
        EXPECT_EQ(e.status(), 503);
    }
}

TEST(Http, WireReplyForms) {
    auto text = vlm_wire_reply(R"({"text": "Lorenz Saltletts", "usage": {"input_tokens": 3, "output_tokens": 4}})");
    EXPECT_EQ(text.content, "Lorenz Saltletts");
    EXPECT_EQ(text.usage.output_tokens, 4u);
    EXPECT_EQ(vlm_wire_reply("plain words").content, "plain words");
    auto fields = vlm_wire_reply(R"({"brand": null, "usage": {"input_tokens": 1}})");
    EXPECT_FALSE(json::parse(fields.content).contains("usage"));
}
