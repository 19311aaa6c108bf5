#pragma once

// Pluggable chat-model access: prompt templates, strict reply parsing with
// bounded retries, a persistent write-once reply cache, a sliding-window
// rate limiter and bounded in-flight requests.

#include "termscope/taxonomy.hpp"
#include "termscope/url.hpp"
#include "termscope/util/hash.hpp"
#include "termscope/util/text.hpp"

#include <httplib.h>
#include <json.hpp>
#include <openssl/evp.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

namespace termscope {

using nlohmann::json;

enum class PromptName { SimpleBinary, FinancialTemplate, UnfavorableTaxonomy, WebsiteCls, PaymentPageCls, TopicAssignment };

inline std::string_view to_string(PromptName p) {
    switch (p) {
    case PromptName::SimpleBinary: return "simple_binary";
    case PromptName::FinancialTemplate: return "financial_template";
    case PromptName::UnfavorableTaxonomy: return "unfavorable_taxonomy";
    case PromptName::WebsiteCls: return "website_cls";
    case PromptName::PaymentPageCls: return "payment_page_cls";
    case PromptName::TopicAssignment: return "topic_assignment";
    }
    return "simple_binary";
}

class GatewayError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PayloadTooLarge : public GatewayError {
public:
    using GatewayError::GatewayError;
};

class EmptyPayload : public GatewayError {
public:
    using GatewayError::GatewayError;
};

// The model never produced a reply inside the closed label set.
class UnparseableReply : public GatewayError {
public:
    UnparseableReply(std::string prompt, std::string last_reply)
        : GatewayError("unparseable_reply for " + prompt + ": '" + last_reply + "'"),
          last_reply_(std::move(last_reply)) {}
    const std::string& last_reply() const { return last_reply_; }

private:
    std::string last_reply_;
};

// Network or provider failure; distinct from a bad reply.
class TransportError : public GatewayError {
public:
    using GatewayError::GatewayError;
};

inline constexpr std::string_view kPayloadPlaceholder = "{{payload}}";
inline constexpr std::string_view kRetryInstruction = "Respond with exactly one label.";

struct PromptTemplate {
    PromptName name;
    int version = 1;
    std::string body; // exactly one {{payload}}
};

inline std::string render_prompt(const PromptTemplate& tpl, std::string_view payload,
                                 std::size_t max_chars = 48000) {
    if (text::trim(payload).empty()) throw EmptyPayload("empty payload for " + std::string(to_string(tpl.name)));
    auto pos = tpl.body.find(kPayloadPlaceholder);
    if (pos == std::string::npos || tpl.body.find(kPayloadPlaceholder, pos + 1) != std::string::npos)
        throw GatewayError("template must contain exactly one payload placeholder");
    std::string out;
    out.reserve(tpl.body.size() + payload.size());
    out.append(tpl.body, 0, pos);
    out.append(payload);
    out.append(tpl.body, pos + kPayloadPlaceholder.size());
    if (out.size() > max_chars)
        throw PayloadTooLarge("payload_too_large: rendered prompt is " + std::to_string(out.size()) +
                              " chars, budget " + std::to_string(max_chars));
    return out;
}

// ---- prompt bodies ---------------------------------------------------------

inline PromptTemplate simple_binary_prompt() {
    return {PromptName::SimpleBinary, 1,
            "Classify the following term as 'malicious' or 'benign'. A term is 'malicious' if it is a financial "
            "term that is one-sided, unbalanced, unfair, or harmful to users.\n\n"
            "Respond only with 'm' for malicious or 'b' for benign.\n\n"
            "Term: {{payload}}"};
}

// Version tracks the taxonomy version so that taxonomy edits invalidate
// cached labels.
inline PromptTemplate unfavorable_taxonomy_prompt(const Taxonomy& taxonomy) {
    std::string body =
        "You will be provided with a paragraph extracted from the terms and conditions. Your task is to classify "
        "them into one of the topics below or 'b' for 'benign':\n\n";
    for (const auto& t : taxonomy.entries()) body += "- " + t.name + ": " + t.description + "\n";
    body +=
        "\nIf the term is not a financial term or a reasonable financial term based on common sense, reply 'b' for "
        "'benign'.\n\n"
        "If the term is malicious and financial, reply with a topic from the template above. If it is malicious "
        "and financial but fits none of the topics, reply 'Others'.\n\n"
        "Term: {{payload}}";
    return {PromptName::UnfavorableTaxonomy, 1000 + taxonomy.version(), std::move(body)};
}

inline PromptTemplate financial_template_prompt(const FinancialTemplate& tpl) {
    std::string body =
        "You will be provided with a paragraph extracted from the terms and conditions of a shopping website. "
        "Decide whether it is a financial term, meaning it concerns money the customer pays, is charged, is "
        "refunded or may lose. If it is, reply with the one category below that fits it best. If it is not a "
        "financial term, reply 'n' for 'non-financial'.\n\n";
    for (const auto& c : tpl.categories) body += "- " + c.name + ": " + c.description + "\n";
    body += "\nReply with the category name only.\n\nTerm: {{payload}}";
    return {PromptName::FinancialTemplate, 1000 + tpl.version, std::move(body)};
}

inline PromptTemplate website_cls_prompt() {
    return {PromptName::WebsiteCls, 1,
            "You will be given a website address, possibly with the visible text or a screenshot of its homepage. "
            "Decide whether it is a shopping website, meaning a site where visitors can buy products or services. "
            "Reply only with 'shopping' or 'non-shopping'.\n\n{{payload}}"};
}

inline PromptTemplate payment_page_cls_prompt() {
    return {PromptName::PaymentPageCls, 1,
            "You will be given the content of a web page, possibly with a screenshot. Decide whether it is a "
            "payment page, where the visitor enters payment details or confirms a purchase. Reply only with "
            "'payment' or 'non-payment'.\n\n{{payload}}"};
}

inline PromptTemplate topic_assignment_prompt() {
    return {PromptName::TopicAssignment, 1,
            "Below is a template of topics for terms and conditions, followed by a random sample of terms taken "
            "from one cluster. If the sample belongs to one of the existing topics, reply with that topic name "
            "only. Otherwise reply with a single line of the form 'NEW: <topic name> - <one-line description>'.\n\n"
            "{{payload}}"};
}

// ---- reply parsers ---------------------------------------------------------

using ReplyParser = std::function<std::optional<std::string>(std::string_view raw)>;

inline std::optional<std::string> parse_binary_reply(std::string_view raw) {
    auto r = text::normalize_reply(raw);
    if (r == "m") return std::string("malicious");
    if (r == "b") return std::string("benign");
    return std::nullopt;
}

// Canonical type name, "benign" or "Others".
inline std::optional<std::string> parse_taxonomy_reply(const Taxonomy& taxonomy, std::string_view raw) {
    auto r = text::normalize_reply(raw);
    if (r == "b" || r == "benign") return std::string("benign");
    if (r == "others" || r == "other") return std::string("Others");
    if (const auto* t = taxonomy.find(r)) return t->name;
    return std::nullopt;
}

// Canonical category name or "non_financial".
inline std::optional<std::string> parse_financial_reply(const FinancialTemplate& tpl, std::string_view raw) {
    auto r = text::normalize_reply(raw);
    auto key = text::label_key(r);
    if (r == "n" || key == "non financial") return std::string("non_financial");
    if (const auto* c = tpl.find(r)) return c->name;
    return std::nullopt;
}

inline std::optional<std::string> parse_two_way_reply(std::string_view raw, std::string_view positive) {
    auto key = text::label_key(text::normalize_reply(raw));
    if (key == positive) return std::string(positive);
    if (key == "non " + std::string(positive) || key == "non" + std::string(positive))
        return "non_" + std::string(positive);
    return std::nullopt;
}

// ---- models ----------------------------------------------------------------

struct ChatRequest {
    PromptName prompt = PromptName::SimpleBinary;
    int prompt_version = 1;
    std::string payload; // the term/page content before templating
    std::string text;    // fully rendered request
    std::optional<std::vector<unsigned char>> image;
    double temperature = 0.0;
};

struct ChatResponse {
    std::string content;
    std::optional<int> prompt_tokens;
    std::optional<int> completion_tokens;
};

class ChatModel {
public:
    virtual ~ChatModel() = default;
    virtual std::string model_id() const = 0;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
};

// Pure lookup model for tests and offline runs. Resolution order: exact
// (prompt, payload) entry, payload-only entry, first substring rule for the
// prompt in insertion order, per-prompt default, global default, "".
class MockModel final : public ChatModel {
public:
    explicit MockModel(std::string id = "mock") : id_(std::move(id)) {}

    std::string model_id() const override { return id_; }
    void set_model_id(std::string id) { id_ = std::move(id); }

    MockModel& reply(PromptName prompt, std::string_view payload, std::string reply) {
        exact_[key(std::string(to_string(prompt)), sha256_hex(payload))] = std::move(reply);
        return *this;
    }
    MockModel& reply_any_prompt(std::string_view payload, std::string reply) {
        exact_[key("*", sha256_hex(payload))] = std::move(reply);
        return *this;
    }
    MockModel& reply_containing(PromptName prompt, std::string needle, std::string reply) {
        rules_.push_back({std::string(to_string(prompt)), std::move(needle), std::move(reply)});
        return *this;
    }
    MockModel& default_reply(PromptName prompt, std::string reply) {
        defaults_[std::string(to_string(prompt))] = std::move(reply);
        return *this;
    }
    MockModel& fallback(std::string reply) {
        fallback_ = std::move(reply);
        return *this;
    }
    // Makes every call after `n` successful ones throw TransportError.
    MockModel& fail_after(std::size_t n) {
        fail_after_ = n;
        return *this;
    }

    ChatResponse complete(const ChatRequest& request) override {
        auto n = calls_.fetch_add(1) + 1;
        {
            std::lock_guard lock(log_mu_);
            log_.push_back(request);
        }
        if (fail_after_ && n > *fail_after_) throw TransportError("mock transport failure");
        return {lookup(request), std::nullopt, std::nullopt};
    }

    std::string lookup(const ChatRequest& request) const {
        auto prompt = std::string(to_string(request.prompt));
        auto h = sha256_hex(request.payload);
        if (auto it = exact_.find(key(prompt, h)); it != exact_.end()) return it->second;
        if (auto it = exact_.find(key("*", h)); it != exact_.end()) return it->second;
        for (const auto& r : rules_)
            if ((r.prompt == prompt || r.prompt == "*") && request.payload.find(r.needle) != std::string::npos)
                return r.reply;
        if (auto it = defaults_.find(prompt); it != defaults_.end()) return it->second;
        return fallback_;
    }

    std::size_t calls() const { return calls_.load(); }

    std::vector<ChatRequest> log() const {
        std::lock_guard lock(log_mu_);
        return log_;
    }

    // JSONL, one object per line:
    //   {"prompt": "simple_binary", "payload": "...", "reply": "m"}
    //   {"payload_sha256": "...", "reply": "b"}            (any prompt)
    //   {"prompt": "website_cls", "contains": "shop3", "reply": "non-shopping"}
    //   {"prompt": "website_cls", "default": "shopping"}
    //   {"default": "b"}                                   (global fallback)
    //   {"model_id": "mock-gpt"}
    static std::unique_ptr<MockModel> from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw GatewayError("cannot open mock reply table: " + path);
        auto model = std::make_unique<MockModel>();
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (text::trim(line).empty() || text::trim(line).front() == '#') continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const json::parse_error& e) {
                throw GatewayError("mock table " + path + ":" + std::to_string(lineno) + ": " + e.what());
            }
            model->load_entry(j);
        }
        return model;
    }

    void load_entry(const json& j) {
        if (j.contains("model_id")) id_ = j["model_id"].get<std::string>();
        std::string prompt = j.value("prompt", "*");
        if (j.contains("reply")) {
            auto reply = j["reply"].get<std::string>();
            if (j.contains("payload")) exact_[key(prompt, sha256_hex(j["payload"].get<std::string>()))] = reply;
            else if (j.contains("payload_sha256")) exact_[key(prompt, j["payload_sha256"].get<std::string>())] = reply;
            else if (j.contains("contains")) rules_.push_back({prompt, j["contains"].get<std::string>(), reply});
        } else if (j.contains("default")) {
            if (prompt == "*") fallback_ = j["default"].get<std::string>();
            else defaults_[prompt] = j["default"].get<std::string>();
        }
    }

private:
    struct Rule {
        std::string prompt;
        std::string needle;
        std::string reply;
    };

    static std::string key(const std::string& prompt, const std::string& hash) { return prompt + "|" + hash; }

    std::string id_;
    std::unordered_map<std::string, std::string> exact_;
    std::vector<Rule> rules_;
    std::unordered_map<std::string, std::string> defaults_;
    std::string fallback_;
    std::optional<std::size_t> fail_after_;
    std::atomic<std::size_t> calls_{0};
    mutable std::mutex log_mu_;
    std::vector<ChatRequest> log_;
};

inline std::string base64_encode(const std::vector<unsigned char>& bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

// Chat-completions client (OpenAI-compatible request/response schema). The
// API key comes from TERMSCOPE_LLM_KEY.
class HttpChatModel final : public ChatModel {
public:
    HttpChatModel(std::string endpoint, std::string model, std::chrono::seconds timeout = std::chrono::seconds(60))
        : endpoint_(parse_url(endpoint)), model_(std::move(model)), timeout_(timeout) {
        if (const char* key = std::getenv("TERMSCOPE_LLM_KEY")) api_key_ = key;
    }

    std::string model_id() const override { return model_; }

    ChatResponse complete(const ChatRequest& request) override {
        json content;
        if (request.image) {
            content = json::array({{{"type", "text"}, {"text", request.text}},
                                   {{"type", "image_url"},
                                    {"image_url", {{"url", "data:image/png;base64," + base64_encode(*request.image)}}}}});
        } else {
            content = request.text;
        }
        json body{{"model", model_},
                  {"temperature", request.temperature},
                  {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
        httplib::Client client(endpoint_.origin());
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        auto path = endpoint_.path + (endpoint_.query ? "?" + *endpoint_.query : "");
        auto res = client.Post(path, headers, body.dump(), "application/json");
        if (!res) throw TransportError("chat request failed: " + httplib::to_string(res.error()));
        if (res->status < 200 || res->status >= 300)
            throw TransportError("chat endpoint returned HTTP " + std::to_string(res->status));
        try {
            auto j = json::parse(res->body);
            ChatResponse out;
            out.content = j.at("choices").at(0).at("message").at("content").get<std::string>();
            if (j.contains("usage")) {
                out.prompt_tokens = j["usage"].value("prompt_tokens", 0);
                out.completion_tokens = j["usage"].value("completion_tokens", 0);
            }
            return out;
        } catch (const json::exception& e) {
            throw TransportError(std::string("malformed chat response: ") + e.what());
        }
    }

private:
    Url endpoint_;
    std::string model_;
    std::chrono::seconds timeout_;
    std::string api_key_;
};

// "mock:<file>" loads a reply table; anything else is an http(s) endpoint.
inline std::shared_ptr<ChatModel> make_chat_model(const std::string& endpoint, const std::string& model_id) {
    if (endpoint.rfind("mock:", 0) == 0) {
        auto path = endpoint.substr(5);
        std::shared_ptr<MockModel> m = path.empty() ? std::make_shared<MockModel>() : MockModel::from_file(path);
        if (!model_id.empty()) m->set_model_id(model_id);
        return m;
    }
    return std::make_shared<HttpChatModel>(endpoint, model_id);
}

// ---- rate limiting ---------------------------------------------------------

class TimeSource {
public:
    virtual ~TimeSource() = default;
    virtual double now() = 0; // seconds
    virtual void sleep_until(double t) = 0;
};

class SteadyTime final : public TimeSource {
public:
    double now() override {
        return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
    }
    void sleep_until(double t) override {
        auto d = t - now();
        if (d > 0) std::this_thread::sleep_for(std::chrono::duration<double>(d));
    }
};

// Deterministic clock for tests: sleeping advances time instantly.
class VirtualTime final : public TimeSource {
public:
    double now() override {
        std::lock_guard lock(mu_);
        return t_;
    }
    void sleep_until(double t) override {
        std::lock_guard lock(mu_);
        if (t > t_) t_ = t;
    }
    void advance(double dt) {
        std::lock_guard lock(mu_);
        t_ += dt;
    }

private:
    std::mutex mu_;
    double t_ = 0.0;
};

// Sliding-window limiter: at most `per_second` dispatches in any half-open
// one-second window. per_second <= 0 disables limiting.
class RateLimiter {
public:
    explicit RateLimiter(double per_second, std::shared_ptr<TimeSource> time = std::make_shared<SteadyTime>())
        : limit_(per_second <= 0 ? 0 : std::max<std::size_t>(1, static_cast<std::size_t>(per_second))),
          time_(std::move(time)) {}

    // Blocks until a dispatch is allowed; returns the dispatch time.
    double acquire() {
        std::lock_guard lock(mu_);
        double t = time_->now();
        if (limit_ == 0) return t;
        while (true) {
            while (!recent_.empty() && recent_.front() + 1.0 <= t) recent_.pop_front();
            if (recent_.size() < limit_) break;
            time_->sleep_until(recent_.front() + 1.0);
            t = time_->now();
        }
        recent_.push_back(t);
        return t;
    }

    std::size_t limit() const { return limit_; }

private:
    std::size_t limit_;
    std::shared_ptr<TimeSource> time_;
    std::mutex mu_;
    std::deque<double> recent_;
};

// ---- reply cache -----------------------------------------------------------

struct CachedReply {
    std::string raw;
    std::string label;
};

// Write-once cache keyed by (model id, prompt name+version, payload hash);
// persisted as JSONL when a path is given.
class ReplyCache {
public:
    ReplyCache() = default;
    explicit ReplyCache(std::filesystem::path file) : file_(std::move(file)) {
        std::ifstream in(*file_);
        std::string line;
        while (std::getline(in, line)) {
            try {
                auto j = json::parse(line);
                entries_.emplace(j.at("key").get<std::string>(),
                                 CachedReply{j.at("raw").get<std::string>(), j.at("label").get<std::string>()});
            } catch (const json::exception&) {
            }
        }
    }

    static std::string key(std::string_view model_id, PromptName prompt, int version, std::string_view payload) {
        return std::string(model_id) + "|" + std::string(to_string(prompt)) + "@" + std::to_string(version) + "|" +
               sha256_hex(payload);
    }

    std::optional<CachedReply> get(const std::string& key) const {
        std::shared_lock lock(mu_);
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    // Returns false when the key already exists; the stored value is kept.
    bool put(const std::string& key, CachedReply value) {
        std::unique_lock lock(mu_);
        auto [it, inserted] = entries_.emplace(key, std::move(value));
        if (inserted && file_) {
            std::ofstream out(*file_, std::ios::app);
            out << json{{"key", key}, {"raw", it->second.raw}, {"label", it->second.label}}.dump() << '\n';
        }
        return inserted;
    }

    std::size_t size() const {
        std::shared_lock lock(mu_);
        return entries_.size();
    }

private:
    std::optional<std::filesystem::path> file_;
    mutable std::shared_mutex mu_;
    std::unordered_map<std::string, CachedReply> entries_;
};

// ---- gateway ---------------------------------------------------------------

struct ModelReply {
    std::string raw;
    std::optional<std::string> label; // nullopt means unparsed
    std::string model_id;
    PromptName prompt = PromptName::SimpleBinary;
    int prompt_version = 0;
    double latency_ms = 0.0;
    std::optional<int> prompt_tokens;
    std::optional<int> completion_tokens;
    std::string cache_key;
    bool from_cache = false;
    int attempts = 0;
};

struct GatewayConfig {
    int max_retries = 2;
    std::size_t max_in_flight = 8;
    double rate_limit_per_second = 0.0;
    std::size_t max_prompt_chars = 48000;
};

class Gateway {
public:
    Gateway(std::shared_ptr<ChatModel> model, GatewayConfig config = {}, std::shared_ptr<ReplyCache> cache = nullptr,
            std::shared_ptr<TimeSource> time = std::make_shared<SteadyTime>(),
            const Taxonomy& taxonomy = default_taxonomy(),
            const FinancialTemplate& financial = default_financial_template())
        : model_(std::move(model)), config_(config),
          cache_(cache ? std::move(cache) : std::make_shared<ReplyCache>()),
          limiter_(config.rate_limit_per_second, std::move(time)), taxonomy_(taxonomy), financial_(financial),
          simple_(simple_binary_prompt()), unfavorable_(unfavorable_taxonomy_prompt(taxonomy_)),
          financial_prompt_(financial_template_prompt(financial_)), website_(website_cls_prompt()),
          payment_(payment_page_cls_prompt()), topic_(topic_assignment_prompt()) {}

    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    const std::string model_id() const { return model_->model_id(); }
    const Taxonomy& taxonomy() const { return taxonomy_; }
    const FinancialTemplate& financial_template() const { return financial_; }
    const GatewayConfig& config() const { return config_; }
    ReplyCache& cache() { return *cache_; }

    const PromptTemplate& prompt(PromptName name) const {
        switch (name) {
        case PromptName::SimpleBinary: return simple_;
        case PromptName::FinancialTemplate: return financial_prompt_;
        case PromptName::UnfavorableTaxonomy: return unfavorable_;
        case PromptName::WebsiteCls: return website_;
        case PromptName::PaymentPageCls: return payment_;
        case PromptName::TopicAssignment: return topic_;
        }
        return simple_;
    }

    // Number of requests actually sent to the model.
    std::size_t model_calls() const { return model_calls_.load(); }
    std::size_t cache_hits() const { return cache_hits_.load(); }

    // Cache-first query with strict parsing. On a parse failure the request
    // is repeated with the retry instruction appended, up to max_retries
    // times. Only parsed replies are cached. Never throws UnparseableReply:
    // the returned reply has label == nullopt instead.
    ModelReply query(PromptName name, std::string_view payload, const ReplyParser& parser,
                     const std::optional<std::vector<unsigned char>>& image = std::nullopt) {
        const auto& tpl = prompt(name);
        auto rendered = render_prompt(tpl, payload, config_.max_prompt_chars);
        ModelReply reply;
        reply.model_id = model_->model_id();
        reply.prompt = name;
        reply.prompt_version = tpl.version;
        reply.cache_key = ReplyCache::key(reply.model_id, name, tpl.version, payload);
        if (auto hit = cache_->get(reply.cache_key)) {
            cache_hits_.fetch_add(1);
            reply.raw = hit->raw;
            reply.label = hit->label;
            reply.from_cache = true;
            return reply;
        }
        auto start = std::chrono::steady_clock::now();
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            ChatRequest req;
            req.prompt = name;
            req.prompt_version = tpl.version;
            req.payload = std::string(payload);
            req.text = attempt == 0 ? rendered : rendered + "\n\n" + std::string(kRetryInstruction);
            req.image = image;
            req.temperature = 0.0;
            auto response = dispatch(req);
            reply.attempts = attempt + 1;
            reply.raw = response.content;
            reply.prompt_tokens = response.prompt_tokens;
            reply.completion_tokens = response.completion_tokens;
            reply.label = parser(response.content);
            if (reply.label) break;
        }
        reply.latency_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (reply.label) cache_->put(reply.cache_key, {reply.raw, *reply.label});
        return reply;
    }

    // Throws UnparseableReply when the label contract is violated.
    ModelReply query_strict(PromptName name, std::string_view payload, const ReplyParser& parser,
                            const std::optional<std::vector<unsigned char>>& image = std::nullopt) {
        auto r = query(name, payload, parser, image);
        if (!r.label) throw UnparseableReply(std::string(to_string(name)), r.raw);
        return r;
    }

    enum class Binary { Malicious, Benign };

    Binary classify_simple(std::string_view term_text) {
        auto r = query_strict(PromptName::SimpleBinary, term_text, parse_binary_reply);
        return *r.label == "malicious" ? Binary::Malicious : Binary::Benign;
    }

    // Canonical type name, "benign" or "Others".
    ModelReply classify_taxonomy(std::string_view term_text) {
        return query_strict(PromptName::UnfavorableTaxonomy, term_text,
                            [this](std::string_view raw) { return parse_taxonomy_reply(taxonomy_, raw); });
    }

    ModelReply classify_financial(std::string_view term_text) {
        return query_strict(PromptName::FinancialTemplate, term_text,
                            [this](std::string_view raw) { return parse_financial_reply(financial_, raw); });
    }

private:
    ChatResponse dispatch(const ChatRequest& req) {
        acquire_slot();
        struct Release {
            Gateway* g;
            ~Release() { g->release_slot(); }
        } release{this};
        limiter_.acquire();
        model_calls_.fetch_add(1);
        return model_->complete(req);
    }

    void acquire_slot() {
        std::unique_lock lock(slot_mu_);
        slot_cv_.wait(lock, [this] { return in_flight_ < std::max<std::size_t>(1, config_.max_in_flight); });
        ++in_flight_;
        peak_in_flight_ = std::max(peak_in_flight_, in_flight_);
    }

    void release_slot() {
        {
            std::lock_guard lock(slot_mu_);
            --in_flight_;
        }
        slot_cv_.notify_one();
    }

public:
    std::size_t peak_in_flight() const {
        std::lock_guard lock(slot_mu_);
        return peak_in_flight_;
    }

private:
    std::shared_ptr<ChatModel> model_;
    GatewayConfig config_;
    std::shared_ptr<ReplyCache> cache_;
    RateLimiter limiter_;
    Taxonomy taxonomy_;
    FinancialTemplate financial_;
    PromptTemplate simple_, unfavorable_, financial_prompt_, website_, payment_, topic_;
    std::atomic<std::size_t> model_calls_{0};
    std::atomic<std::size_t> cache_hits_{0};
    mutable std::mutex slot_mu_;
    std::condition_variable slot_cv_;
    std::size_t in_flight_ = 0;
    std::size_t peak_in_flight_ = 0;
};

} // namespace termscope
