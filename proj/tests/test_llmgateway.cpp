#include <atomic>
#include <chrono>
#include <thread>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "xlcode/llmgateway.hpp"

using namespace xlcode;
using namespace xlcode::llm;
using namespace std::chrono_literals;

namespace {

ChatRequest req(std::string user, std::string model = "m") {
    ChatRequest r;
    r.model_name = std::move(model);
    r.system_prompt = "sys";
    r.user_prompt = std::move(user);
    return r;
}

ChatResponse ok(std::string text) { return {std::move(text), "stop", 0.5, 3, 4}; }

// Local OpenAI-compatible server; `handler` decides each reply.
class MockServer {
public:
    explicit MockServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/v1/chat/completions", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockServer() {
        server_.stop();
        thread_.join();
    }
    EndpointConfig endpoint() const {
        EndpointConfig cfg;
        cfg.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
        cfg.model_name = "m";
        cfg.timeout = 5s;
        cfg.retry.base_delay = 1ms;
        cfg.retry.max_delay = 4ms;
        return cfg;
    }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

std::string completion_body(const std::string& content) {
    return json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}},
                                          {"finish_reason", "stop"}}})},
                {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 2}}}}
        .dump();
}

} // namespace

TEST(RequestHash, CoversEveryField) {
    auto base = req("hello");
    auto h = request_hash(base);
    EXPECT_EQ(h.size(), 64u);
    EXPECT_EQ(h, request_hash(req("hello")));
    auto a = base; a.model_name = "other";
    auto b = base; b.system_prompt = "other";
    auto c = base; c.user_prompt = "other";
    auto d = base; d.temperature = 0.7;
    auto e = base; e.max_tokens = 10;
    for (const auto& x : {a, b, c, d, e})
        EXPECT_NE(request_hash(x), h);
}

TEST(RequestHash, Sha256KnownVector) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(ChatRequest, DefaultsAndValidation) {
    ChatRequest r;
    EXPECT_DOUBLE_EQ(r.temperature, 0.8);
    r.temperature = 2.5;
    EXPECT_THROW(r.validate(), InvalidArgument);
}

TEST(Replay, HitReturnsStoredResponseVerbatim) {
    Transcript t;
    t.record(req("q"), ok("answer"));
    auto client = Client::replay(std::move(t));
    auto r = client.complete(req("q"));
    EXPECT_EQ(r.text, "answer");
    EXPECT_EQ(r.to_json(), ok("answer").to_json());
}

TEST(Replay, MissIsError) {
    auto client = Client::replay(Transcript{});
    try {
        client.complete(req("never seen"));
        FAIL();
    } catch (const ReplayMiss& e) {
        EXPECT_NE(std::string(e.what()).find("unrecorded request"), std::string::npos);
    }
}

TEST(Replay, TranscriptFileRoundTrip) {
    xlcode::testing::ScratchDir dir;
    Transcript t;
    t.record(req("a"), ok("1"));
    t.record(req("b"), ChatResponse{std::nullopt, "content_filter", 0.1, 1, 0});
    t.save(dir.path() / "t.jsonl");
    auto back = Transcript::load(dir.path() / "t.jsonl");
    EXPECT_EQ(back.size(), 2u);
    EXPECT_EQ(back.find(req("a"))->text, "1");
    EXPECT_FALSE(back.find(req("b"))->text.has_value());
}

TEST(Replay, TamperedHashRejected) {
    xlcode::testing::ScratchDir dir;
    auto p = dir.write("t.jsonl", json{{"hash", "00"}, {"request", req("a").to_json()}, {"response", ok("1").to_json()}}
                                          .dump() + "\n");
    EXPECT_THROW(Transcript::load(p), FormatError);
}

TEST(Live, RetriesTransientFailures) {
    std::atomic<int> calls{0};
    MockServer server([&](const httplib::Request&, httplib::Response& res) {
        if (++calls <= 2) {
            res.status = 503;
            res.set_content("busy", "text/plain");
            return;
        }
        res.set_content(completion_body("def f(): pass"), "application/json");
    });
    auto transport = std::make_shared<HttpTransport>(server.endpoint());
    auto client = Client::live(transport);
    auto r = client.complete(req("write f"));
    EXPECT_EQ(r.text, "def f(): pass");
    EXPECT_EQ(r.prompt_tokens, 7);
    EXPECT_EQ(transport->attempts_made(), 3);
    EXPECT_EQ(client.transcript().size(), 1u);
}

TEST(Live, ClientErrorNotRetried) {
    std::atomic<int> calls{0};
    MockServer server([&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 401;
        res.set_content("no key", "text/plain");
    });
    auto client = Client::live(std::make_shared<HttpTransport>(server.endpoint()));
    try {
        client.complete(req("x"));
        FAIL();
    } catch (const HttpError& e) {
        EXPECT_EQ(e.status(), 401);
    }
    EXPECT_EQ(calls.load(), 1);
    EXPECT_EQ(client.transcript().size(), 0u);
}

TEST(Live, RetryBudgetExhausted) {
    std::atomic<int> calls{0};
    MockServer server([&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 500;
    });
    auto cfg = server.endpoint();
    cfg.retry.max_attempts = 3;
    auto client = Client::live(std::make_shared<HttpTransport>(cfg));
    EXPECT_THROW(client.complete(req("x")), HttpError);
    EXPECT_EQ(calls.load(), 3);
}

TEST(Live, WireShapeAndBackoff) {
    json seen;
    MockServer server([&](const httplib::Request& r, httplib::Response& res) {
        seen = json::parse(r.body);
        EXPECT_EQ(r.get_header_value("Authorization"), "Bearer k");
        res.set_content(completion_body("ok"), "application/json");
    });
    auto cfg = server.endpoint();
    cfg.api_key = "k";
    Client::live(std::make_shared<HttpTransport>(cfg)).complete(req("u"));
    EXPECT_EQ(seen["messages"][0]["role"], "system");
    EXPECT_EQ(seen["messages"][1]["content"], "u");
    EXPECT_DOUBLE_EQ(seen["temperature"].get<double>(), 0.8);

    RetryPolicy p;
    EXPECT_EQ(p.delay_before(2), 500ms);
    EXPECT_EQ(p.delay_before(3), 1000ms);
    EXPECT_EQ(p.delay_before(10), 8000ms);
}

TEST(Live, RecordsToTranscriptFile) {
    xlcode::testing::ScratchDir dir;
    MockServer server([&](const httplib::Request&, httplib::Response& res) {
        res.set_content(completion_body("x"), "application/json");
    });
    auto rec = std::make_shared<Transcript>();
    rec->attach_file(dir.path() / "rec.jsonl");
    Client::live(std::make_shared<HttpTransport>(server.endpoint()), rec).complete(req("p"));
    auto loaded = Transcript::load(dir.path() / "rec.jsonl");
    EXPECT_EQ(loaded.find(req("p"))->text, "x");
}

TEST(Batch, OrderedReplay) {
    Transcript t;
    for (int i = 0; i < 5; ++i)
        t.record(req(std::to_string(i)), ok("r" + std::to_string(i)));
    auto client = Client::replay(std::move(t));
    std::vector<ChatRequest> rs;
    for (int i = 0; i < 5; ++i)
        rs.push_back(req(std::to_string(i)));
    auto out = client.batch(rs, 2);
    ASSERT_EQ(out.size(), 5u);
    for (int i = 0; i < 5; ++i)
        EXPECT_EQ(out[static_cast<std::size_t>(i)].response->text, "r" + std::to_string(i));
    auto again = client.batch(rs, 3);
    for (int i = 0; i < 5; ++i)
        EXPECT_EQ(again[static_cast<std::size_t>(i)].response->to_json().dump(),
                  out[static_cast<std::size_t>(i)].response->to_json().dump());
}

TEST(Batch, MissReportedPerItem) {
    Transcript t;
    for (int i = 0; i < 5; ++i)
        if (i != 3)
            t.record(req(std::to_string(i)), ok("r"));
    auto client = Client::replay(std::move(t));
    std::vector<ChatRequest> rs;
    for (int i = 0; i < 5; ++i)
        rs.push_back(req(std::to_string(i)));
    auto out = client.batch(rs, 2);
    int good = 0;
    for (const auto& item : out)
        good += item.ok() ? 1 : 0;
    EXPECT_EQ(good, 4);
    EXPECT_FALSE(out[3].ok());
    EXPECT_NE(out[3].error.find("unrecorded"), std::string::npos);
    EXPECT_THROW(client.batch(rs, 0), InvalidArgument);
}

TEST(Batch, PeakConcurrencyBounded) {
    std::atomic<int> in_flight{0}, peak{0};
    MockServer server([&](const httplib::Request& r, httplib::Response& res) {
        int now = ++in_flight;
        int prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {}
        std::this_thread::sleep_for(5ms);
        --in_flight;
        res.set_content(completion_body(json::parse(r.body)["messages"][1]["content"]), "application/json");
    });
    auto client = Client::live(std::make_shared<HttpTransport>(server.endpoint()));
    std::vector<ChatRequest> rs;
    for (int i = 0; i < 100; ++i)
        rs.push_back(req(std::to_string(i)));
    auto out = client.batch(rs, 8);
    EXPECT_LE(peak.load(), 8);
    EXPECT_GE(peak.load(), 2);
    for (int i = 0; i < 100; ++i)
        EXPECT_EQ(out[static_cast<std::size_t>(i)].response->text, std::to_string(i));
}

TEST(Backtranslate, RendersTemplate) {
    EXPECT_EQ(render_backtranslation("binary me jodne ...", "hi"),
              "Translate the sentence binary me jodne ... from Hindi to English");
    EXPECT_THROW(render_backtranslation("x", "en"), InvalidArgument);
}

TEST(Backtranslate, ReplayedSpanishPrompt) {
    auto base = req("");
    auto expected = base;
    expected.user_prompt = "Translate the sentence Escribe una función para sumar dos números. from Spanish to English";
    Transcript t;
    t.record(expected, ok(" Write a function to add two numbers.\n"));
    auto client = Client::replay(std::move(t));
    EXPECT_EQ(backtranslate_prompt(client, base, "Escribe una función para sumar dos números.", "es"),
              "Write a function to add two numbers.");
    EXPECT_THROW(backtranslate_prompt(client, base, "x", "en"), InvalidArgument);
}
