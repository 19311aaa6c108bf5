#pragma once

// Site harvesting: polite page fetching, shopping-site classification,
// language detection, and terms-page discovery by positive/negative link
// patterns with bounded snowball crawling.

#include "termscope/corpus_store.hpp"
#include "termscope/html.hpp"
#include "termscope/language.hpp"
#include "termscope/llm_gateway.hpp"
#include "termscope/url.hpp"

#include <httplib.h>

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

namespace termscope {

enum class FetchStatus { Ok, NotFound, HttpError, NetworkError, Timeout, TooManyRedirects, TooLarge, RobotsDisallowed, InvalidUrl };

inline std::string_view to_string(FetchStatus s) {
    switch (s) {
    case FetchStatus::Ok: return "ok";
    case FetchStatus::NotFound: return "not_found";
    case FetchStatus::HttpError: return "http_error";
    case FetchStatus::NetworkError: return "network_error";
    case FetchStatus::Timeout: return "timeout";
    case FetchStatus::TooManyRedirects: return "too_many_redirects";
    case FetchStatus::TooLarge: return "too_large";
    case FetchStatus::RobotsDisallowed: return "robots_disallowed";
    case FetchStatus::InvalidUrl: return "invalid_url";
    }
    return "network_error";
}

struct PageEvidence {
    std::string url;       // requested, normalized
    std::string final_url; // after redirects
    std::optional<std::string> html_body;
    std::optional<std::vector<unsigned char>> screenshot;
    FetchStatus fetch_status = FetchStatus::NetworkError;
    int http_status = 0;
    int redirects = 0;

    bool ok() const { return fetch_status == FetchStatus::Ok; }
};

// ---- transports ------------------------------------------------------------

struct HttpResponse {
    int status = 0;
    std::string location;
    std::string body;
    bool truncated = false;
};

class TransportFailure : public std::runtime_error {
public:
    TransportFailure(FetchStatus status, const std::string& what) : std::runtime_error(what), status_(status) {}
    FetchStatus status() const { return status_; }

private:
    FetchStatus status_;
};

// One HTTP GET without redirect handling.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse get(const Url& url, std::size_t max_body) = 0;
};

class HttplibTransport final : public HttpTransport {
public:
    explicit HttplibTransport(std::string user_agent = "termscope/1.0",
                              std::chrono::seconds timeout = std::chrono::seconds(15))
        : user_agent_(std::move(user_agent)), timeout_(timeout) {}

    HttpResponse get(const Url& url, std::size_t max_body) override {
        httplib::Client client(url.origin());
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);
        client.set_follow_location(false);
        HttpResponse out;
        auto path = url.path + (url.query ? "?" + *url.query : "");
        auto res = client.Get(
            path, httplib::Headers{{"User-Agent", user_agent_}},
            [&](const httplib::Response& r) {
                out.status = r.status;
                out.location = r.get_header_value("Location");
                return true;
            },
            [&](const char* data, std::size_t len) {
                if (out.body.size() + len > max_body) {
                    out.truncated = true;
                    return false;
                }
                out.body.append(data, len);
                return true;
            });
        if (out.truncated) return out;
        if (!res) {
            auto err = res.error();
            if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
                throw TransportFailure(FetchStatus::Timeout, httplib::to_string(err));
            throw TransportFailure(FetchStatus::NetworkError, httplib::to_string(err));
        }
        out.status = res->status;
        return out;
    }

private:
    std::string user_agent_;
    std::chrono::seconds timeout_;
};

// In-memory web for tests and offline fixture runs. Unknown URLs are 404.
class FixtureTransport final : public HttpTransport {
public:
    FixtureTransport& page(const std::string& url, std::string body, int status = 200) {
        std::lock_guard lock(mu_);
        pages_[normalize_url(url)] = {status, "", std::move(body), false};
        return *this;
    }
    FixtureTransport& redirect(const std::string& from, const std::string& to, int status = 302) {
        std::lock_guard lock(mu_);
        pages_[normalize_url(from)] = {status, to, "", false};
        return *this;
    }
    FixtureTransport& unreachable(const std::string& origin) {
        std::lock_guard lock(mu_);
        unreachable_.insert(parse_url(origin).host);
        return *this;
    }

    // Directory layout: <dir>/<host>/<path>; a path ending in '/' maps to
    // index.html, "robots.txt" is served as-is. A host directory containing
    // a file named UNREACHABLE simulates a network failure.
    static std::shared_ptr<FixtureTransport> from_directory(const std::filesystem::path& dir) {
        auto t = std::make_shared<FixtureTransport>();
        if (!std::filesystem::exists(dir)) return t;
        for (const auto& host_dir : std::filesystem::directory_iterator(dir)) {
            if (!host_dir.is_directory()) continue;
            auto host = host_dir.path().filename().string();
            if (std::filesystem::exists(host_dir.path() / "UNREACHABLE")) {
                t->unreachable_.insert(host);
                continue;
            }
            for (const auto& f : std::filesystem::recursive_directory_iterator(host_dir.path())) {
                if (!f.is_regular_file()) continue;
                auto rel = std::filesystem::relative(f.path(), host_dir.path()).generic_string();
                std::string path = "/" + rel;
                if (f.path().filename() == "index.html") path = path.substr(0, path.size() - std::string("index.html").size());
                std::ifstream in(f.path(), std::ios::binary);
                std::string body((std::istreambuf_iterator<char>(in)), {});
                for (const auto* scheme : {"https://", "http://"})
                    t->pages_[normalize_url(scheme + host + path)] = {200, "", body, false};
            }
        }
        return t;
    }

    HttpResponse get(const Url& url, std::size_t max_body) override {
        std::lock_guard lock(mu_);
        ++requests_[normalize(url).str()];
        if (unreachable_.count(url.host)) throw TransportFailure(FetchStatus::NetworkError, "host unreachable");
        auto it = pages_.find(normalize(url).str());
        if (it == pages_.end()) return {404, "", "not found", false};
        auto r = it->second;
        if (r.body.size() > max_body) {
            r.body.resize(max_body);
            r.truncated = true;
        }
        return r;
    }

    std::size_t requests(const std::string& url) const {
        std::lock_guard lock(mu_);
        auto it = requests_.find(normalize_url(url));
        return it == requests_.end() ? 0 : it->second;
    }

    std::size_t total_requests() const {
        std::lock_guard lock(mu_);
        std::size_t n = 0;
        for (const auto& [_, c] : requests_) n += c;
        return n;
    }

private:
    mutable std::mutex mu_;
    std::unordered_map<std::string, HttpResponse> pages_;
    std::set<std::string> unreachable_;
    std::unordered_map<std::string, std::size_t> requests_;
};

// Pluggable screenshot capture; no browser engine ships by default.
class Renderer {
public:
    virtual ~Renderer() = default;
    virtual std::optional<std::vector<unsigned char>> screenshot(const Url& url) = 0;
};

// ---- robots.txt ------------------------------------------------------------

class RobotsRules {
public:
    RobotsRules() = default;

    static RobotsRules parse(std::string_view body, std::string_view user_agent) {
        struct Group {
            std::vector<std::string> agents;
            std::vector<std::pair<bool, std::string>> rules; // (allow, pattern)
        };
        std::vector<Group> groups;
        bool last_was_agent = false;
        for (auto& raw_line : text::split(body, '\n')) {
            std::string line = raw_line;
            if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
            auto colon = line.find(':');
            if (colon == std::string::npos) continue;
            auto key = text::to_lower(text::trim(std::string_view(line).substr(0, colon)));
            auto value = std::string(text::trim(std::string_view(line).substr(colon + 1)));
            if (key == "user-agent") {
                if (!last_was_agent || groups.empty()) groups.emplace_back();
                groups.back().agents.push_back(text::to_lower(value));
                last_was_agent = true;
            } else if (key == "allow" || key == "disallow") {
                last_was_agent = false;
                if (groups.empty()) continue;
                if (key == "disallow" && value.empty()) continue;
                groups.back().rules.emplace_back(key == "allow", value);
            } else {
                last_was_agent = false;
            }
        }
        auto ua = text::to_lower(user_agent);
        auto slash = ua.find('/');
        auto token = slash == std::string::npos ? ua : ua.substr(0, slash);
        const Group* chosen = nullptr;
        const Group* star = nullptr;
        for (const auto& g : groups)
            for (const auto& a : g.agents) {
                if (a == "*") star = star ? star : &g;
                else if (!token.empty() && token.find(a) != std::string::npos && !chosen) chosen = &g;
            }
        RobotsRules r;
        if (const Group* g = chosen ? chosen : star) r.rules_ = g->rules;
        return r;
    }

    // Longest matching pattern wins; Allow wins ties.
    bool allowed(std::string_view path_and_query) const {
        std::size_t best_len = 0;
        bool verdict = true;
        bool matched = false;
        for (const auto& [allow, pattern] : rules_) {
            if (!matches(pattern, path_and_query)) continue;
            if (!matched || pattern.size() > best_len || (pattern.size() == best_len && allow)) {
                best_len = pattern.size();
                verdict = allow;
                matched = true;
            }
        }
        return verdict;
    }

private:
    static bool matches(std::string_view pattern, std::string_view path) {
        bool anchored = !pattern.empty() && pattern.back() == '$';
        if (anchored) pattern.remove_suffix(1);
        // Greedy-free wildcard match with backtracking over '*'.
        std::size_t p = 0, s = 0, star_p = std::string_view::npos, star_s = 0;
        while (s < path.size()) {
            if (p < pattern.size() && pattern[p] == '*') {
                star_p = p++;
                star_s = s;
            } else if (p < pattern.size() && pattern[p] == path[s]) {
                ++p;
                ++s;
            } else if (p == pattern.size() && !anchored) {
                return true;
            } else if (star_p != std::string_view::npos) {
                p = star_p + 1;
                s = ++star_s;
            } else {
                return false;
            }
        }
        while (p < pattern.size() && pattern[p] == '*') ++p;
        return p == pattern.size();
    }

    std::vector<std::pair<bool, std::string>> rules_;
};

// ---- fetching --------------------------------------------------------------

struct FetchOptions {
    std::size_t max_body = 5 * 1024 * 1024;
    int max_redirects = 10;
    std::chrono::milliseconds per_host_delay{1000};
    std::size_t max_hosts_in_flight = 16;
    bool honor_robots = true;
    std::string user_agent = "termscope/1.0";
};

class PageFetcher {
public:
    virtual ~PageFetcher() = default;
    virtual PageEvidence fetch(const std::string& url) = 0;
};

// Fetches each URL at most once per instance (one instance per pipeline
// run), follows redirects, honors robots.txt, spaces requests to the same
// host and caps the number of hosts in flight.
class WebFetcher final : public PageFetcher {
public:
    WebFetcher(std::shared_ptr<HttpTransport> transport, FetchOptions options = {},
               std::shared_ptr<Renderer> renderer = nullptr)
        : transport_(std::move(transport)), options_(std::move(options)), renderer_(std::move(renderer)) {}

    PageEvidence fetch(const std::string& raw_url) override {
        std::string key;
        try {
            key = normalize_url(raw_url);
        } catch (const UrlError&) {
            PageEvidence e;
            e.url = raw_url;
            e.fetch_status = FetchStatus::InvalidUrl;
            return e;
        }
        std::shared_ptr<Slot> slot;
        bool owner = false;
        {
            std::lock_guard lock(memo_mu_);
            auto& s = memo_[key];
            if (!s) {
                s = std::make_shared<Slot>();
                owner = true;
            }
            slot = s;
        }
        if (owner) {
            PageEvidence e;
            try {
                e = fetch_uncached(key);
            } catch (...) {
                e.url = key;
                e.fetch_status = FetchStatus::NetworkError;
            }
            {
                std::lock_guard lock(slot->mu);
                slot->value = std::move(e);
                slot->done = true;
            }
            slot->cv.notify_all();
        }
        std::unique_lock lock(slot->mu);
        slot->cv.wait(lock, [&] { return slot->done; });
        return slot->value;
    }

    const FetchOptions& options() const { return options_; }

private:
    struct Slot {
        std::mutex mu;
        std::condition_variable cv;
        bool done = false;
        PageEvidence value;
    };

    struct HostState {
        std::mutex mu; // serializes requests to the host
        std::chrono::steady_clock::time_point next_allowed{};
        std::optional<RobotsRules> robots;
    };

    HostState& host_state(const std::string& origin) {
        std::lock_guard lock(hosts_mu_);
        auto& p = hosts_[origin];
        if (!p) p = std::make_unique<HostState>();
        return *p;
    }

    // Issues one request, applying politeness. Caller holds host.mu.
    HttpResponse polite_get(HostState& host, const Url& url) {
        auto now = std::chrono::steady_clock::now();
        if (host.next_allowed > now) std::this_thread::sleep_until(host.next_allowed);
        try {
            auto r = transport_->get(url, options_.max_body);
            host.next_allowed = std::chrono::steady_clock::now() + options_.per_host_delay;
            return r;
        } catch (...) {
            host.next_allowed = std::chrono::steady_clock::now() + options_.per_host_delay;
            throw;
        }
    }

    bool robots_allow(HostState& host, const Url& url) {
        if (!options_.honor_robots) return true;
        if (!host.robots) {
            Url robots_url = url;
            robots_url.path = "/robots.txt";
            robots_url.query.reset();
            robots_url.fragment.reset();
            try {
                auto r = polite_get(host, robots_url);
                host.robots = r.status >= 200 && r.status < 300 ? RobotsRules::parse(r.body, options_.user_agent)
                                                                : RobotsRules{};
            } catch (const TransportFailure&) {
                host.robots = RobotsRules{};
            }
        }
        return host.robots->allowed(url.path + (url.query ? "?" + *url.query : ""));
    }

    void enter_global() {
        std::unique_lock lock(global_mu_);
        global_cv_.wait(lock, [&] { return in_flight_ < std::max<std::size_t>(1, options_.max_hosts_in_flight); });
        ++in_flight_;
    }

    void leave_global() {
        {
            std::lock_guard lock(global_mu_);
            --in_flight_;
        }
        global_cv_.notify_one();
    }

    PageEvidence fetch_uncached(const std::string& normalized) {
        PageEvidence e;
        e.url = normalized;
        Url current = parse_url(normalized);
        for (int hop = 0;; ++hop) {
            auto& host = host_state(current.origin());
            HttpResponse r;
            {
                enter_global();
                struct Leave {
                    WebFetcher* f;
                    ~Leave() { f->leave_global(); }
                } leave{this};
                std::lock_guard host_lock(host.mu);
                if (!robots_allow(host, current)) {
                    e.final_url = current.str();
                    e.fetch_status = FetchStatus::RobotsDisallowed;
                    return e;
                }
                try {
                    r = polite_get(host, current);
                } catch (const TransportFailure& f) {
                    e.final_url = current.str();
                    e.fetch_status = f.status();
                    return e;
                }
            }
            e.http_status = r.status;
            if (r.status >= 300 && r.status < 400 && !r.location.empty()) {
                if (hop + 1 > options_.max_redirects) {
                    e.final_url = current.str();
                    e.fetch_status = FetchStatus::TooManyRedirects;
                    return e;
                }
                auto next = resolve(current, r.location);
                if (!next) {
                    e.fetch_status = FetchStatus::InvalidUrl;
                    return e;
                }
                current = normalize(*next);
                e.redirects = hop + 1;
                continue;
            }
            e.final_url = current.str();
            if (r.truncated) {
                e.fetch_status = FetchStatus::TooLarge;
                return e;
            }
            if (r.status == 404 || r.status == 410) {
                e.fetch_status = FetchStatus::NotFound;
                return e;
            }
            if (r.status < 200 || r.status >= 300) {
                e.fetch_status = FetchStatus::HttpError;
                return e;
            }
            e.fetch_status = FetchStatus::Ok;
            e.html_body = std::move(r.body);
            if (renderer_) e.screenshot = renderer_->screenshot(current);
            return e;
        }
    }

    std::shared_ptr<HttpTransport> transport_;
    FetchOptions options_;
    std::shared_ptr<Renderer> renderer_;
    std::mutex memo_mu_;
    std::unordered_map<std::string, std::shared_ptr<Slot>> memo_;
    std::mutex hosts_mu_;
    std::unordered_map<std::string, std::unique_ptr<HostState>> hosts_;
    std::mutex global_mu_;
    std::condition_variable global_cv_;
    std::size_t in_flight_ = 0;
};

inline PageEvidence fetch_page(PageFetcher& fetcher, const std::string& url) { return fetcher.fetch(url); }

// ---- website classification -----------------------------------------------

struct WebsiteClassification {
    ShoppingVerdict verdict = ShoppingVerdict::Unknown;
    ClassificationMode mode = ClassificationMode::UrlHtml;
    std::string model_id;
    std::string raw_reply;
    std::string diagnostic;
};

class MissingScreenshot : public std::invalid_argument {
public:
    MissingScreenshot() : std::invalid_argument("url_screenshot mode requires a screenshot") {}
};

inline constexpr std::size_t kHomepageTextBudget = 6000;

inline std::string website_payload(const PageEvidence& evidence, ClassificationMode mode) {
    std::string payload = "URL: " + (evidence.final_url.empty() ? evidence.url : evidence.final_url);
    if (mode == ClassificationMode::UrlHtml && evidence.html_body) {
        auto visible = text::normalize_whitespace(html::visible_text(*evidence.html_body));
        payload += "\n\nHomepage text:\n" + text::utf8_truncate(visible, kHomepageTextBudget);
    }
    return payload;
}

inline WebsiteClassification classify_website(const PageEvidence& evidence, ClassificationMode mode, Gateway& gateway) {
    if (mode == ClassificationMode::UrlScreenshot && !evidence.screenshot) throw MissingScreenshot();
    WebsiteClassification out;
    out.mode = mode;
    out.model_id = gateway.model_id();
    std::optional<std::vector<unsigned char>> image;
    if (mode == ClassificationMode::UrlScreenshot) image = evidence.screenshot;
    auto reply = gateway.query(PromptName::WebsiteCls, website_payload(evidence, mode),
                               [](std::string_view raw) { return parse_two_way_reply(raw, "shopping"); }, image);
    out.raw_reply = reply.raw;
    if (!reply.label) {
        out.verdict = ShoppingVerdict::Unknown;
        out.diagnostic = "unparseable website classification reply after " + std::to_string(reply.attempts) +
                         " attempts: '" + reply.raw + "'";
        return out;
    }
    out.verdict = *reply.label == "shopping" ? ShoppingVerdict::Shopping : ShoppingVerdict::NonShopping;
    return out;
}

// ---- link discovery --------------------------------------------------------

struct LinkPatternSet {
    std::vector<std::string> positive_patterns;
    std::vector<std::string> negative_patterns;
};

inline const LinkPatternSet& default_link_patterns() {
    static const LinkPatternSet patterns{
        {
            "terms.*?conditions",
            "terms.*?of.*?use",
            "terms.*?of.*?service",
            "terms.*?of.*?sale",
            "terms.*?of.*?conditions",
            "terms.*?and.*?conditions",
            "terms.*?&.*?conditions",
            "conditions.*?of.*?use",
            "intellectual.*property.*policy",
            "return[s]?.*?policy",
            "refund[s]?.*?policy",
            "return.*?and.*?refund.*?policy",
            "cancellation.*?and.*?returns",
            "cancellation.*?returns",
            "prohibited.*conduct",
            "electronic.*communication.*policy",
            "safety.*guideline",
            "requests.*from.*law.*enforcement",
            "bonus.*terms.*apply",
            "community.*rules",
            "gift.*card.*policy",
            "contact.*us.*here",
            "shipping.*policy",
            "warranty",
            "end.*user.*license",
            "user.*?agreement",
            "payment.*terms",
            "content.*policy",
            "terms",
        },
        {
            "privacy.*?policy",
            "cookie.*?policy",
            "privacy.*?notice",
            "sale.*?tax.*?policy",
            "prohibited.*?items",
            "1099.*?k.*?form",
            "dmca.*copyright.*notification",
        }};
    return patterns;
}

class PatternError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Override file: "[positive]" and "[negative]" section headers, one regex
// per line. Blank lines are skipped.
inline LinkPatternSet parse_pattern_file(std::string_view content) {
    LinkPatternSet set;
    std::vector<std::string>* section = nullptr;
    std::size_t lineno = 0;
    for (auto& raw : text::split(content, '\n')) {
        ++lineno;
        auto line = std::string(text::trim(raw));
        if (line.empty()) continue;
        if (line == "[positive]") {
            section = &set.positive_patterns;
        } else if (line == "[negative]") {
            section = &set.negative_patterns;
        } else if (!section) {
            throw PatternError("pattern outside a section at line " + std::to_string(lineno));
        } else {
            section->push_back(line);
        }
    }
    return set;
}

inline LinkPatternSet load_pattern_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw PatternError("cannot open pattern file: " + path);
    return parse_pattern_file(std::string((std::istreambuf_iterator<char>(in)), {}));
}

class LinkMatcher {
public:
    explicit LinkMatcher(const LinkPatternSet& patterns = default_link_patterns()) {
        auto compile = [](const std::vector<std::string>& src, std::vector<std::regex>& dst) {
            for (const auto& p : src) {
                try {
                    dst.emplace_back(p, std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
                } catch (const std::regex_error& e) {
                    throw PatternError("invalid pattern '" + p + "': " + e.what());
                }
            }
        };
        compile(patterns.positive_patterns, positive_);
        compile(patterns.negative_patterns, negative_);
    }

    bool positive(std::string_view s) const { return any(positive_, s); }
    bool negative(std::string_view s) const { return any(negative_, s); }

    // Either field matching a negative pattern excludes the link.
    bool accepts(std::string_view anchor_text, std::string_view href_path) const {
        if (negative(anchor_text) || negative(href_path)) return false;
        return positive(anchor_text) || positive(href_path);
    }

private:
    static bool any(const std::vector<std::regex>& rs, std::string_view s) {
        if (s.empty()) return false;
        for (const auto& r : rs)
            if (std::regex_search(s.begin(), s.end(), r)) return true;
        return false;
    }

    std::vector<std::regex> positive_;
    std::vector<std::regex> negative_;
};

inline std::string percent_decode(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '%' && i + 2 < s.size() && std::isxdigit(static_cast<unsigned char>(s[i + 1])) &&
            std::isxdigit(static_cast<unsigned char>(s[i + 2]))) {
            out.push_back(static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16)));
            i += 2;
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

// Normalized absolute URLs of matching anchors, deduplicated, in document
// order.
inline std::vector<std::string> discover_term_links(std::string_view markup, const Url& base, const LinkMatcher& matcher) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& a : html::anchors(markup)) {
        auto href = text::trim(a.href);
        if (href.empty() || href.front() == '#') continue;
        auto target = resolve(base, href);
        if (!target) continue;
        auto path = percent_decode(target->path);
        if (!matcher.accepts(a.text, path)) continue;
        auto url = normalize(*target).str();
        if (seen.insert(url).second) out.push_back(url);
    }
    return out;
}

inline std::vector<std::string> discover_term_links(std::string_view markup, const std::string& base_url,
                                                    const LinkPatternSet& patterns = default_link_patterns()) {
    return discover_term_links(markup, parse_url(base_url), LinkMatcher(patterns));
}

// ---- snowball crawl --------------------------------------------------------

struct CrawledDocument {
    TermsDocument document;
    std::string body;
    int depth = 0;
};

// Breadth-first from the homepage. Links found on the homepage are depth 1;
// links found on a depth-d policy page are depth d+1, up to depth_limit.
// Only pages under the seed's registrable domain are followed.
inline std::vector<CrawledDocument> snowball_crawl(const std::string& seed_site_url, PageFetcher& fetcher,
                                                   const LinkMatcher& matcher, int depth_limit = 2,
                                                   std::optional<std::string> homepage_html = std::nullopt) {
    std::vector<CrawledDocument> out;
    auto seed = normalize(parse_url(seed_site_url));
    const auto seed_str = seed.str();
    Url home_base = seed;
    if (!homepage_html) {
        auto home = fetcher.fetch(seed_str);
        if (!home.ok() || !home.html_body) return out;
        homepage_html = *home.html_body;
        if (!home.final_url.empty()) home_base = parse_url(home.final_url);
    }
    std::set<std::string> visited{seed_str};
    std::deque<std::pair<std::string, int>> queue;
    auto enqueue_from = [&](std::string_view markup, const Url& base, int depth) {
        if (depth > depth_limit) return;
        for (const auto& link : discover_term_links(markup, base, matcher)) {
            auto u = parse_url(link);
            if (!same_registrable_domain(u, seed)) continue;
            if (!visited.insert(link).second) continue;
            queue.emplace_back(link, depth);
        }
    };
    enqueue_from(*homepage_html, home_base, 1);
    while (!queue.empty()) {
        auto [url, depth] = queue.front();
        queue.pop_front();
        auto page = fetcher.fetch(url);
        if (!page.ok() || !page.html_body) continue;
        CrawledDocument doc;
        doc.document.website_url = seed_str;
        doc.document.page_url = url;
        doc.document.fetch_status = std::string(to_string(page.fetch_status));
        doc.document.raw_body_hash = sha256_hex(*page.html_body);
        doc.document.extracted_at = now_utc();
        doc.depth = depth;
        doc.body = *page.html_body;
        auto base = page.final_url.empty() ? parse_url(url) : parse_url(page.final_url);
        enqueue_from(doc.body, base, depth + 1);
        out.push_back(std::move(doc));
    }
    return out;
}

} // namespace termscope
