#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
// <resolv.h> (via httplib) defines _res, which collides with Eigen parameter names.
#ifdef _res
#undef _res
#endif
#include <json.hpp>

#include "error.hpp"
#include "jsonl.hpp"
#include "lang.hpp"
#include "parallel.hpp"

namespace xlcode::llm {

using json = nlohmann::json;

inline constexpr double kDefaultTemperature = 0.8;

struct ChatRequest {
    std::string model_name;
    std::string system_prompt;
    std::string user_prompt;
    double temperature = kDefaultTemperature;
    int max_tokens = 1024;
    std::optional<std::int64_t> seed;

    void validate() const {
        if (temperature < 0.0 || temperature > 2.0)
            throw InvalidArgument("temperature must be in [0, 2]");
        if (max_tokens <= 0)
            throw InvalidArgument("max_tokens must be positive");
    }

    // Key order is fixed by nlohmann's sorted object map, so dump() is canonical.
    json to_json() const {
        json j = {{"model_name", model_name},
                  {"system_prompt", system_prompt},
                  {"user_prompt", user_prompt},
                  {"temperature", temperature},
                  {"max_tokens", max_tokens}};
        if (seed)
            j["seed"] = *seed;
        return j;
    }

    static ChatRequest from_json(const json& j) {
        ChatRequest r;
        r.model_name = j.at("model_name").get<std::string>();
        r.system_prompt = j.at("system_prompt").get<std::string>();
        r.user_prompt = j.at("user_prompt").get<std::string>();
        r.temperature = j.at("temperature").get<double>();
        r.max_tokens = j.at("max_tokens").get<int>();
        if (j.contains("seed") && !j.at("seed").is_null())
            r.seed = j.at("seed").get<std::int64_t>();
        return r;
    }
};

struct ChatResponse {
    std::optional<std::string> text; // present iff finish_reason is stop or length
    std::string finish_reason;
    double latency = 0.0;
    int prompt_tokens = 0;
    int completion_tokens = 0;

    json to_json() const {
        return {{"text", text ? json(*text) : json(nullptr)},
                {"finish_reason", finish_reason},
                {"latency", latency},
                {"token_counts", {{"prompt", prompt_tokens}, {"completion", completion_tokens}}}};
    }

    static ChatResponse from_json(const json& j) {
        ChatResponse r;
        if (!j.at("text").is_null())
            r.text = j.at("text").get<std::string>();
        r.finish_reason = j.at("finish_reason").get<std::string>();
        r.latency = j.value("latency", 0.0);
        if (j.contains("token_counts")) {
            r.prompt_tokens = j["token_counts"].value("prompt", 0);
            r.completion_tokens = j["token_counts"].value("completion", 0);
        }
        return r;
    }
};

inline bool finish_ok(const std::string& reason) { return reason == "stop" || reason == "length"; }

inline std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

inline std::string request_hash(const ChatRequest& req) { return sha256_hex(req.to_json().dump()); }

// ---------------------------------------------------------------------------
// Errors

class ReplayMiss : public Error {
public:
    explicit ReplayMiss(const ChatRequest& req)
        : Error("unrecorded request " + request_hash(req) + " (model " + req.model_name + ", user prompt \"" +
                req.user_prompt.substr(0, 60) + "\")") {}
};

class HttpError : public Error {
public:
    HttpError(int status, const std::string& msg) : Error(msg), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

// ---------------------------------------------------------------------------
// Transcript

struct TranscriptRecord {
    std::string hash;
    ChatRequest request;
    ChatResponse response;
};

// Append-only request/response log. Lookups are by request hash; the first
// record for a hash wins.
class Transcript {
public:
    Transcript() = default;

    static Transcript load(const std::filesystem::path& path) {
        Transcript t;
        jsonl::for_each(path, [&](const json& j, std::size_t line) {
            TranscriptRecord r{j.at("hash").get<std::string>(), ChatRequest::from_json(j.at("request")),
                               ChatResponse::from_json(j.at("response"))};
            if (request_hash(r.request) != r.hash)
                throw FormatError(path.filename().string() + ":" + std::to_string(line) +
                                  ": hash does not match request");
            t.insert(std::move(r));
        });
        return t;
    }

    // Records are also appended to `path` as they arrive.
    void attach_file(const std::filesystem::path& path) {
        std::unique_lock lock(mu_);
        if (path.has_parent_path())
            std::filesystem::create_directories(path.parent_path());
        out_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::app);
        if (!*out_)
            throw Error("cannot open transcript " + path.string());
    }

    void record(const ChatRequest& req, const ChatResponse& resp) {
        TranscriptRecord r{request_hash(req), req, resp};
        std::unique_lock lock(mu_);
        if (out_) {
            *out_ << jsonl::dump_line({{"hash", r.hash}, {"request", req.to_json()}, {"response", resp.to_json()}});
            out_->flush();
        }
        insert_locked(std::move(r));
    }

    std::optional<ChatResponse> find(const ChatRequest& req) const {
        auto h = request_hash(req);
        std::shared_lock lock(mu_);
        auto it = index_.find(h);
        if (it == index_.end())
            return std::nullopt;
        return records_[it->second].response;
    }

    std::size_t size() const {
        std::shared_lock lock(mu_);
        return records_.size();
    }

    std::vector<TranscriptRecord> records() const {
        std::shared_lock lock(mu_);
        return records_;
    }

    void save(const std::filesystem::path& path) const {
        std::vector<json> rows;
        for (const auto& r : records())
            rows.push_back({{"hash", r.hash}, {"request", r.request.to_json()}, {"response", r.response.to_json()}});
        jsonl::write_all(path, rows);
    }

    Transcript(Transcript&& other) noexcept
        : records_(std::move(other.records_)), index_(std::move(other.index_)), out_(std::move(other.out_)) {}
    Transcript& operator=(Transcript&& other) noexcept {
        records_ = std::move(other.records_);
        index_ = std::move(other.index_);
        out_ = std::move(other.out_);
        return *this;
    }

private:
    void insert(TranscriptRecord r) {
        std::unique_lock lock(mu_);
        insert_locked(std::move(r));
    }
    void insert_locked(TranscriptRecord r) {
        index_.emplace(r.hash, records_.size());
        records_.push_back(std::move(r));
    }

    std::vector<TranscriptRecord> records_;
    std::map<std::string, std::size_t> index_;
    std::unique_ptr<std::ofstream> out_;
    mutable std::shared_mutex mu_;
};

// ---------------------------------------------------------------------------
// Endpoint configuration and transport

struct RetryPolicy {
    int max_attempts = 4;
    std::chrono::milliseconds base_delay{500};
    std::chrono::milliseconds max_delay{8000};

    std::chrono::milliseconds delay_before(int attempt) const { // attempt >= 2
        auto d = base_delay * (1LL << std::min(attempt - 2, 20));
        return std::min<std::chrono::milliseconds>(d, max_delay);
    }
};

struct EndpointConfig {
    std::string base_url = "http://127.0.0.1:8000/v1"; // scheme://host[:port][/prefix]
    std::string api_key;
    std::string model_name;
    std::string system_prompt =
        "You are an expert Python programmer. Answer with a single Python function in a ```python code block.";
    std::chrono::seconds timeout{120};
    RetryPolicy retry;

    // XLCODE_BASE_URL, XLCODE_API_KEY, XLCODE_MODEL override the defaults.
    static EndpointConfig from_env(EndpointConfig base) {
        if (const char* v = std::getenv("XLCODE_BASE_URL"))
            base.base_url = v;
        if (const char* v = std::getenv("XLCODE_API_KEY"))
            base.api_key = v;
        if (const char* v = std::getenv("XLCODE_MODEL"))
            base.model_name = v;
        return base;
    }
};

inline EndpointConfig endpoint_from_env() { return EndpointConfig::from_env(EndpointConfig{}); }

class Transport {
public:
    virtual ~Transport() = default;
    virtual ChatResponse send(const ChatRequest& req) = 0;
};

inline json wire_request(const ChatRequest& req) {
    json body = {{"model", req.model_name},
                 {"messages",
                  json::array({{{"role", "system"}, {"content", req.system_prompt}},
                               {{"role", "user"}, {"content", req.user_prompt}}})},
                 {"temperature", req.temperature},
                 {"max_tokens", req.max_tokens}};
    if (req.seed)
        body["seed"] = *req.seed;
    return body;
}

inline ChatResponse parse_wire_response(const json& body) {
    ChatResponse r;
    const auto& choice = body.at("choices").at(0);
    r.finish_reason = choice.value("finish_reason", std::string("stop"));
    if (r.finish_reason.empty())
        r.finish_reason = "stop";
    const auto& msg = choice.at("message");
    if (finish_ok(r.finish_reason) && msg.contains("content") && msg.at("content").is_string())
        r.text = msg.at("content").get<std::string>();
    if (body.contains("usage") && body.at("usage").is_object()) {
        r.prompt_tokens = body["usage"].value("prompt_tokens", 0);
        r.completion_tokens = body["usage"].value("completion_tokens", 0);
    }
    return r;
}

// POSTs OpenAI-style chat completions; retries 408/429/5xx and connection
// failures with exponential backoff, gives up immediately on other 4xx.
class HttpTransport : public Transport {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit HttpTransport(EndpointConfig cfg, Sleeper sleeper = nullptr)
        : cfg_(std::move(cfg)), sleep_(sleeper ? std::move(sleeper) : [](std::chrono::milliseconds d) {
              std::this_thread::sleep_for(d);
          }) {
        auto scheme_end = cfg_.base_url.find("://");
        if (scheme_end == std::string::npos)
            throw ConfigError("base_url must include a scheme: " + cfg_.base_url);
        auto path_start = cfg_.base_url.find('/', scheme_end + 3);
        origin_ = cfg_.base_url.substr(0, path_start);
        prefix_ = path_start == std::string::npos ? "" : cfg_.base_url.substr(path_start);
        while (!prefix_.empty() && prefix_.back() == '/')
            prefix_.pop_back();
    }

    int attempts_made() const { return attempts_.load(); }

    ChatResponse send(const ChatRequest& req) override {
        httplib::Client client(origin_);
        client.set_connection_timeout(cfg_.timeout);
        client.set_read_timeout(cfg_.timeout);
        client.set_write_timeout(cfg_.timeout);
        httplib::Headers headers;
        if (!cfg_.api_key.empty())
            headers.emplace("Authorization", "Bearer " + cfg_.api_key);
        const std::string body = wire_request(req).dump();
        const std::string path = prefix_ + "/chat/completions";

        std::string last_error;
        for (int attempt = 1; attempt <= cfg_.retry.max_attempts; ++attempt) {
            if (attempt > 1)
                sleep_(cfg_.retry.delay_before(attempt));
            ++attempts_;
            auto start = std::chrono::steady_clock::now();
            auto res = client.Post(path, headers, body, "application/json");
            double latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            if (!res) {
                last_error = "connection error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 200) {
                try {
                    auto r = parse_wire_response(json::parse(res->body));
                    r.latency = latency;
                    return r;
                } catch (const json::exception& e) {
                    throw HttpError(200, std::string("malformed completion body: ") + e.what());
                }
            }
            bool transient = res->status == 408 || res->status == 429 || res->status >= 500;
            last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
            if (!transient)
                throw HttpError(res->status, last_error);
        }
        throw HttpError(0, "retry budget exhausted after " + std::to_string(cfg_.retry.max_attempts) +
                               " attempts; last error: " + last_error);
    }

private:
    EndpointConfig cfg_;
    Sleeper sleep_;
    std::string origin_;
    std::string prefix_;
    std::atomic<int> attempts_{0};
};

// ---------------------------------------------------------------------------
// Client

// Live mode sends through a transport and records every success; replay mode
// answers only from the transcript and never touches the network.
class Client {
public:
    static Client replay(Transcript transcript) {
        Client c;
        c.transcript_ = std::make_shared<Transcript>(std::move(transcript));
        return c;
    }

    static Client live(std::shared_ptr<Transport> transport, std::shared_ptr<Transcript> recorder = nullptr) {
        Client c;
        c.transport_ = std::move(transport);
        c.transcript_ = recorder ? std::move(recorder) : std::make_shared<Transcript>();
        return c;
    }

    bool is_replay() const { return transport_ == nullptr; }
    const Transcript& transcript() const { return *transcript_; }

    ChatResponse complete(const ChatRequest& req) const {
        req.validate();
        if (is_replay()) {
            auto hit = transcript_->find(req);
            if (!hit)
                throw ReplayMiss(req);
            return *hit;
        }
        auto resp = transport_->send(req);
        transcript_->record(req, resp);
        return resp;
    }

    struct BatchItem {
        std::optional<ChatResponse> response;
        std::string error;
        bool ok() const { return response.has_value(); }
    };

    // Output order equals input order; a failing item does not stop the batch.
    std::vector<BatchItem> batch(const std::vector<ChatRequest>& requests, std::size_t max_in_flight) const {
        if (max_in_flight < 1)
            throw InvalidArgument("max_in_flight must be >= 1");
        std::vector<BatchItem> out(requests.size());
        parallel_for(requests.size(), max_in_flight, [&](std::size_t i) {
            try {
                out[i].response = complete(requests[i]);
            } catch (const std::exception& e) {
                out[i].error = e.what();
            }
        });
        return out;
    }

private:
    Client() = default;
    std::shared_ptr<Transport> transport_;
    std::shared_ptr<Transcript> transcript_;
};

// ---------------------------------------------------------------------------
// Prompt templates

inline std::string render_backtranslation(const std::string& problem, const std::string& source_lang) {
    if (source_lang == "en")
        throw InvalidArgument("CoT undefined for English");
    return "Translate the sentence " + problem + " from " + lang_display_name(source_lang) + " to English";
}

// Issues the back-translation request built from `base` (model, system prompt,
// sampling settings) and returns the model's English translation.
inline std::string backtranslate_prompt(const Client& client, const ChatRequest& base, const std::string& problem,
                                        const std::string& source_lang) {
    ChatRequest req = base;
    req.user_prompt = render_backtranslation(problem, source_lang);
    auto resp = client.complete(req);
    if (!resp.text)
        throw Error("back-translation returned no text (finish_reason " + resp.finish_reason + ")");
    auto text = *resp.text;
    auto b = text.find_first_not_of(" \t\r\n");
    auto e = text.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? std::string() : text.substr(b, e - b + 1);
}

} // namespace xlcode::llm
