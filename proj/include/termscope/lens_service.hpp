#pragma once

// Per-URL alert service: crawl the site's terms, classify them, cross-check
// against the page the user is on, and report unfavorable terms.

#include "termscope/harvester.hpp"
#include "termscope/llm_gateway.hpp"
#include "termscope/taxonomy.hpp"
#include "termscope/term_classifier.hpp"
#include "termscope/term_extractor.hpp"
#include "termscope/util/parallel.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

namespace termscope {

// ---- payment page detection -----------------------------------------------

enum class PaymentMode { Heuristic, Model };

inline std::string_view to_string(PaymentMode m) { return m == PaymentMode::Heuristic ? "heuristic" : "model"; }

inline PaymentMode parse_payment_mode(std::string_view s) {
    if (s == "heuristic") return PaymentMode::Heuristic;
    if (s == "model") return PaymentMode::Model;
    throw std::invalid_argument("bad payment mode: " + std::string(s));
}

struct PaymentPageVerdict {
    bool is_payment_page = false;
    std::vector<std::string> evidence;
    PaymentMode mode = PaymentMode::Heuristic;
};

class InsufficientEvidence : public std::runtime_error {
public:
    InsufficientEvidence() : std::runtime_error("insufficient_evidence") {}
};

namespace lens_detail {

inline bool any_attr_matches(const html::Token& t, const std::regex& re) {
    for (const auto& a : t.attributes) {
        if (a.name != "name" && a.name != "id" && a.name != "autocomplete" && a.name != "placeholder" &&
            a.name != "aria-label" && a.name != "data-field")
            continue;
        if (std::regex_search(a.value, re)) return true;
    }
    return false;
}

} // namespace lens_detail

// Signals: card-number field, CVV/expiry field, checkout keywords in the
// visible text, a total-amount line. Two distinct signals make a payment
// page.
inline PaymentPageVerdict detect_payment_heuristic(std::string_view markup) {
    static const std::regex card(R"(cc-?number|card[-_ ]?(number|num|no)\b|cardnumber)", std::regex::icase);
    static const std::regex cvv(R"(cvv|cvc|csc|security[-_ ]?code|cc-?exp|expir|exp[-_ ]?(date|month|year)|mm\s*/\s*yy)",
                                std::regex::icase);
    static const std::regex keyword(R"(checkout|payment|billing address)", std::regex::icase);
    static const std::regex total(R"(\btotal\b[^$\d\n]{0,30}(\$|€|£)\s?\d)", std::regex::icase);
    PaymentPageVerdict v;
    v.mode = PaymentMode::Heuristic;
    bool has_card = false, has_cvv = false;
    for (const auto& t : html::tokenize(markup)) {
        if (t.kind != html::TokenKind::StartTag || (t.name != "input" && t.name != "select")) continue;
        if (!has_card && lens_detail::any_attr_matches(t, card)) has_card = true;
        if (!has_cvv && lens_detail::any_attr_matches(t, cvv)) has_cvv = true;
    }
    if (has_card) v.evidence.push_back("card_number_field");
    if (has_cvv) v.evidence.push_back("cvv_or_expiry_field");
    auto visible = text::normalize_whitespace(html::visible_text(markup));
    std::smatch m;
    if (std::regex_search(visible, m, keyword)) v.evidence.push_back("keyword:" + text::to_lower(m.str()));
    if (std::regex_search(visible, total)) v.evidence.push_back("total_amount");
    v.is_payment_page = v.evidence.size() >= 2;
    return v;
}

inline PaymentPageVerdict detect_payment_page(const PageEvidence& evidence, PaymentMode mode, Gateway* gateway = nullptr) {
    if (mode == PaymentMode::Heuristic) {
        if (!evidence.html_body) return {false, {}, PaymentMode::Heuristic};
        return detect_payment_heuristic(*evidence.html_body);
    }
    if (!gateway) throw std::invalid_argument("model payment mode requires a gateway");
    if (!evidence.html_body && !evidence.screenshot) throw InsufficientEvidence();
    std::string payload = "URL: " + (evidence.final_url.empty() ? evidence.url : evidence.final_url);
    if (evidence.html_body) {
        auto visible = text::normalize_whitespace(html::visible_text(*evidence.html_body));
        payload += "\n\nPage text:\n" + text::utf8_truncate(visible, kHomepageTextBudget);
    }
    auto reply = gateway->query(PromptName::PaymentPageCls, payload,
                                [](std::string_view raw) { return parse_two_way_reply(raw, "payment"); },
                                evidence.screenshot);
    PaymentPageVerdict v;
    v.mode = PaymentMode::Model;
    if (reply.label && *reply.label == "payment") {
        v.is_payment_page = true;
        v.evidence.push_back("model_reply:" + reply.cache_key);
    }
    return v;
}

// ---- alerts ----------------------------------------------------------------

struct FlaggedTerm {
    TermRecord term;
    std::string type_name;
};

struct Alert {
    std::string excerpt;
    std::string term_id;
    std::string type_name;
    Category category = Category::Others;
    std::string source_page_url;
    bool suppressed = false;
    std::optional<std::string> suppression_reason;
};

inline constexpr std::size_t kExcerptChars = 500;

inline std::string truncate_chars(std::string_view s, std::size_t max_chars) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) {
            if (count == max_chars) return std::string(s.substr(0, i));
            ++count;
        }
    }
    return std::string(s);
}

// Amounts as written ("$6.85", "€ 1,000", "8%"), with spaces and thousands
// separators removed.
inline std::vector<std::string> monetary_amounts(std::string_view s) {
    static const std::regex money(R"((\$|€|£)\s?\d[\d,]*(\.\d+)?)");
    static const std::regex percent(R"(\d+%)");
    std::vector<std::string> out;
    std::string str(s);
    for (const auto* re : {&money, &percent}) {
        for (auto it = std::sregex_iterator(str.begin(), str.end(), *re); it != std::sregex_iterator(); ++it) {
            std::string a;
            for (char c : it->str())
                if (c != ',' && !text::is_space(static_cast<unsigned char>(c))) a.push_back(c);
            out.push_back(a);
        }
    }
    return out;
}

// Lowercased word tokens; currency signs, digits and decimal points stay
// inside tokens, other punctuation separates.
inline std::vector<std::string> shingle_tokens(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        while (!cur.empty() && (cur.back() == '.' || cur.back() == ',')) cur.pop_back();
        while (!cur.empty() && (cur.front() == '.' || cur.front() == ',')) cur.erase(cur.begin());
        if (!cur.empty()) out.push_back(cur);
        cur.clear();
    };
    for (unsigned char c : s) {
        if (std::isalnum(c) || c >= 0x80 || c == '$' || c == '%' || c == '.' || c == ',')
            cur.push_back(static_cast<char>(std::tolower(c)));
        else flush();
    }
    flush();
    return out;
}

inline constexpr std::size_t kShingleTokens = 5;

// Precomputed view of the page for the "displayed on the page" check.
class PageTextIndex {
public:
    explicit PageTextIndex(std::string_view markup) {
        auto visible = text::normalize_whitespace(html::visible_text(markup));
        for (auto& a : monetary_amounts(visible)) amounts_.insert(a);
        joined_ = " " + text::join(shingle_tokens(visible), " ") + " ";
    }

    bool all_amounts_present(std::string_view term) const {
        for (const auto& a : monetary_amounts(term))
            if (!amounts_.count(a)) return false;
        return true;
    }

    // Terms shorter than one shingle must appear whole.
    bool shares_shingle(std::string_view term) const {
        auto toks = shingle_tokens(term);
        if (toks.empty()) return false;
        std::size_t width = std::min(kShingleTokens, toks.size());
        for (std::size_t i = 0; i + width <= toks.size(); ++i) {
            std::string s = " ";
            for (std::size_t k = i; k < i + width; ++k) s += toks[k] + " ";
            if (joined_.find(s) != std::string::npos) return true;
        }
        return false;
    }

    bool displays(std::string_view term) const { return all_amounts_present(term) && shares_shingle(term); }

private:
    std::set<std::string> amounts_;
    std::string joined_;
};

// On a payment page, a flagged term already displayed there is suppressed.
// Alerts are ordered by category, then by input order.
inline std::vector<Alert> generate_alerts(const std::vector<FlaggedTerm>& flagged, const PaymentPageVerdict& verdict,
                                          const PageEvidence& page, const Taxonomy& taxonomy = default_taxonomy()) {
    std::optional<PageTextIndex> index;
    if (verdict.is_payment_page && page.html_body) index.emplace(*page.html_body);
    std::vector<Alert> out;
    for (const auto& f : flagged) {
        Alert a;
        a.excerpt = truncate_chars(f.term.text, kExcerptChars);
        a.term_id = f.term.id;
        const auto& type = taxonomy.at(f.type_name);
        a.type_name = type.name;
        a.category = type.category;
        a.source_page_url = f.term.source_page_url;
        if (index && index->displays(f.term.text)) {
            a.suppressed = true;
            a.suppression_reason = "displayed_on_payment_page";
        }
        out.push_back(std::move(a));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Alert& x, const Alert& y) { return category_order(x.category) < category_order(y.category); });
    return out;
}

// ---- report ----------------------------------------------------------------

struct ModelMetadata {
    std::string model_id;
    int taxonomy_version = 0;
    int financial_prompt_version = 0;
    int unfavorable_prompt_version = 0;
};

struct AlertReport {
    std::string url;
    std::string status = "ok"; // ok | error
    std::string error;
    bool no_terms_found = false;
    PaymentPageVerdict payment;
    std::vector<Alert> alerts;
    std::map<Category, std::size_t> counts;
    ModelMetadata model;
    std::size_t terms_analyzed = 0;
    std::size_t needs_review = 0;
    double elapsed_ms = 0.0;
};

inline nlohmann::json to_json(const Alert& a) {
    return {{"excerpt", a.excerpt},
            {"term_id", a.term_id},
            {"type", a.type_name},
            {"category", to_string(a.category)},
            {"source_page_url", a.source_page_url},
            {"suppressed", a.suppressed},
            {"suppression_reason", a.suppression_reason ? nlohmann::json(*a.suppression_reason) : nlohmann::json(nullptr)}};
}

inline nlohmann::json to_json(const AlertReport& r) {
    nlohmann::json alerts = nlohmann::json::array();
    for (const auto& a : r.alerts) alerts.push_back(to_json(a));
    nlohmann::json counts = nlohmann::json::object();
    for (auto c : kTaxonomyCategories) counts[std::string(to_string(c))] = 0;
    for (const auto& [c, n] : r.counts) counts[std::string(to_string(c))] = n;
    nlohmann::json j{{"url", r.url},
                     {"status", r.status},
                     {"no_terms_found", r.no_terms_found},
                     {"payment_page",
                      {{"is_payment_page", r.payment.is_payment_page},
                       {"mode", to_string(r.payment.mode)},
                       {"evidence", r.payment.evidence}}},
                     {"alerts", alerts},
                     {"counts", counts},
                     {"model",
                      {{"model_id", r.model.model_id},
                       {"taxonomy_version", r.model.taxonomy_version},
                       {"financial_prompt_version", r.model.financial_prompt_version},
                       {"unfavorable_prompt_version", r.model.unfavorable_prompt_version}}},
                     {"terms_analyzed", r.terms_analyzed},
                     {"needs_review", r.needs_review},
                     {"elapsed_ms", r.elapsed_ms}};
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

// Checks the report's own invariants; returns a description of the first
// violation, or nullopt.
inline std::optional<std::string> check_report(const AlertReport& r, const Taxonomy& taxonomy = default_taxonomy()) {
    std::map<Category, std::size_t> counts;
    for (const auto& a : r.alerts) {
        if (a.suppressed && !r.payment.is_payment_page) return "suppressed alert on a non-payment page";
        if (!taxonomy.find(a.type_name)) return "alert type outside the taxonomy: " + a.type_name;
        ++counts[a.category];
    }
    if (counts != r.counts) return "category counts disagree with alerts";
    if (r.payment.is_payment_page && r.payment.evidence.empty()) return "payment verdict without evidence";
    return std::nullopt;
}

// ---- service ---------------------------------------------------------------

struct LensConfig {
    double ttl_seconds = 24 * 3600;
    PaymentMode payment_mode = PaymentMode::Heuristic;
    int crawl_depth = 2;
    std::size_t workers = 8;
    LinkPatternSet patterns = default_link_patterns();
};

// Result of crawling and classifying one registrable domain.
struct SiteAnalysis {
    bool reachable = false;
    std::string error;
    bool no_terms_found = false;
    std::vector<FlaggedTerm> flagged;
    std::size_t terms_analyzed = 0;
    std::size_t needs_review = 0;
};

// Classifies terms through both passes without persisting them. Pass 2 only
// sees pass-1 positives.
inline SiteAnalysis classify_site_terms(const std::vector<TermRecord>& terms, Gateway& gateway, std::size_t workers) {
    SiteAnalysis out;
    out.terms_analyzed = terms.size();
    const auto& financial = gateway.financial_template();
    const auto& taxonomy = gateway.taxonomy();
    std::vector<std::optional<std::string>> first(terms.size()), second(terms.size());
    parallel_for(terms.size(), workers, [&](std::size_t i) {
        first[i] = gateway
                       .query(PromptName::FinancialTemplate, terms[i].text,
                              [&](std::string_view raw) { return parse_financial_reply(financial, raw); })
                       .label;
    });
    std::vector<std::size_t> positive;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (!first[i]) ++out.needs_review;
        else if (is_financial_positive(financial, *first[i])) positive.push_back(i);
    }
    parallel_for(positive.size(), workers, [&](std::size_t k) {
        auto i = positive[k];
        second[i] = gateway
                        .query(PromptName::UnfavorableTaxonomy, terms[i].text,
                               [&](std::string_view raw) { return parse_taxonomy_reply(taxonomy, raw); })
                        .label;
    });
    for (auto i : positive) {
        if (!second[i]) {
            ++out.needs_review;
            continue;
        }
        if (taxonomy.find(*second[i])) out.flagged.push_back({terms[i], *second[i]});
    }
    return out;
}

class LensService {
public:
    using FetcherFactory = std::function<std::shared_ptr<PageFetcher>()>;

    LensService(std::shared_ptr<Gateway> gateway, FetcherFactory fetchers, LensConfig config = {},
                std::shared_ptr<TimeSource> time = std::make_shared<SteadyTime>())
        : gateway_(std::move(gateway)), fetchers_(std::move(fetchers)), config_(std::move(config)),
          matcher_(config_.patterns), time_(std::move(time)) {}

    Gateway& gateway() { return *gateway_; }
    const LensConfig& config() const { return config_; }

    AlertReport analyze(const std::string& url) { return report_for(url); }

    // Serialized report; identical requests within the TTL return the
    // identical bytes.
    std::string analyze_json(const std::string& url) { return serialized_for(url); }

    std::size_t site_analyses() const { return site_runs_.load(); }

    ModelMetadata model_metadata() const {
        return {gateway_->model_id(), gateway_->taxonomy().version(),
                gateway_->prompt(PromptName::FinancialTemplate).version,
                gateway_->prompt(PromptName::UnfavorableTaxonomy).version};
    }

private:
    struct CachedReport {
        double stored_at = 0.0;
        AlertReport report;
        std::string bytes;
    };
    struct CachedSite {
        double stored_at = 0.0;
        std::shared_future<SiteAnalysis> result;
    };

    AlertReport report_for(const std::string& url) {
        serialized_for(url);
        std::lock_guard lock(mu_);
        return reports_.at(report_key(url)).report;
    }

    std::string report_key(const std::string& url) const {
        try {
            return normalize_url(url);
        } catch (const UrlError&) {
            return "invalid:" + url;
        }
    }

    std::string serialized_for(const std::string& url) {
        auto key = report_key(url);
        {
            std::lock_guard lock(mu_);
            auto it = reports_.find(key);
            if (it != reports_.end() && time_->now() - it->second.stored_at < config_.ttl_seconds) return it->second.bytes;
        }
        auto report = build_report(url);
        auto bytes = to_json(report).dump();
        std::lock_guard lock(mu_);
        auto it = reports_.find(key);
        if (it != reports_.end() && time_->now() - it->second.stored_at < config_.ttl_seconds) return it->second.bytes;
        reports_[key] = {time_->now(), report, bytes};
        return bytes;
    }

    std::string site_key(const Url& u) const {
        return registrable_domain(u.host) + "|" + std::to_string(gateway_->taxonomy().version()) + "|" + gateway_->model_id();
    }

    // Single-flight per site key: concurrent callers share one analysis.
    SiteAnalysis site_analysis(const Url& page, PageFetcher& fetcher) {
        auto key = site_key(page);
        std::shared_future<SiteAnalysis> fut;
        std::promise<SiteAnalysis> promise;
        bool owner = false;
        {
            std::lock_guard lock(mu_);
            auto it = sites_.find(key);
            if (it != sites_.end() && time_->now() - it->second.stored_at < config_.ttl_seconds) {
                fut = it->second.result;
            } else {
                fut = promise.get_future().share();
                sites_[key] = {time_->now(), fut};
                owner = true;
            }
        }
        if (owner) {
            try {
                auto r = run_site(page, fetcher);
                if (!r.reachable) {
                    std::lock_guard lock(mu_);
                    sites_.erase(key);
                }
                promise.set_value(std::move(r));
            } catch (...) {
                {
                    std::lock_guard lock(mu_);
                    sites_.erase(key);
                }
                promise.set_exception(std::current_exception());
            }
        }
        return fut.get();
    }

    SiteAnalysis run_site(const Url& page, PageFetcher& fetcher) {
        site_runs_.fetch_add(1);
        SiteAnalysis out;
        Url home = page;
        home.path = "/";
        home.query.reset();
        home.fragment.reset();
        auto home_url = normalize(home).str();
        auto evidence = fetcher.fetch(home_url);
        if (!evidence.ok()) {
            out.error = "site unreachable: " + std::string(to_string(evidence.fetch_status));
            return out;
        }
        out.reachable = true;
        auto docs = snowball_crawl(home_url, fetcher, matcher_, config_.crawl_depth, evidence.html_body);
        std::vector<TermRecord> terms;
        std::set<std::string> seen;
        for (const auto& d : docs)
            for (auto& t : extract_terms(d.body, home_url, d.document.page_url))
                if (seen.insert(t.id).second) terms.push_back(std::move(t));
        if (terms.empty()) {
            out.no_terms_found = true;
            return out;
        }
        auto classified = classify_site_terms(terms, *gateway_, config_.workers);
        classified.reachable = true;
        return classified;
    }

    AlertReport build_report(const std::string& url) {
        auto start = std::chrono::steady_clock::now();
        AlertReport r;
        r.url = url;
        r.model = model_metadata();
        r.payment.mode = config_.payment_mode;
        std::optional<Url> parsed;
        try {
            parsed = normalize(parse_url(url));
            r.url = parsed->str();
        } catch (const UrlError& e) {
            r.status = "error";
            r.error = std::string("invalid_url: ") + e.what();
        }
        if (parsed) {
            auto fetcher = fetchers_();
            try {
                auto site = site_analysis(*parsed, *fetcher);
                if (!site.reachable) {
                    r.status = "error";
                    r.error = site.error;
                } else {
                    r.no_terms_found = site.no_terms_found;
                    r.terms_analyzed = site.terms_analyzed;
                    r.needs_review = site.needs_review;
                    auto page = fetcher->fetch(parsed->str());
                    if (page.ok()) {
                        try {
                            r.payment = detect_payment_page(page, config_.payment_mode, gateway_.get());
                        } catch (const InsufficientEvidence&) {
                            r.payment = {false, {}, config_.payment_mode};
                        }
                    }
                    r.alerts = generate_alerts(site.flagged, r.payment, page, gateway_->taxonomy());
                    for (const auto& a : r.alerts) ++r.counts[a.category];
                }
            } catch (const std::exception& e) {
                r.status = "error";
                r.error = e.what();
            }
        }
        r.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        return r;
    }

    std::shared_ptr<Gateway> gateway_;
    FetcherFactory fetchers_;
    LensConfig config_;
    LinkMatcher matcher_;
    std::shared_ptr<TimeSource> time_;
    std::mutex mu_;
    std::map<std::string, CachedReport> reports_;
    std::map<std::string, CachedSite> sites_;
    std::atomic<std::size_t> site_runs_{0};
};

// ---- HTTP API --------------------------------------------------------------

struct ServerConfig {
    std::vector<std::string> cors_origins; // "*" allows any origin
};

inline bool origin_allowed(const ServerConfig& cfg, const std::string& origin) {
    if (origin.empty()) return false;
    for (const auto& o : cfg.cors_origins)
        if (o == "*" || o == origin) return true;
    return false;
}

inline void install_routes(httplib::Server& server, LensService& service, ServerConfig cfg) {
    auto cors = [cfg](const httplib::Request& req, httplib::Response& res) {
        auto origin = req.get_header_value("Origin");
        if (origin_allowed(cfg, origin)) {
            res.set_header("Access-Control-Allow-Origin", origin);
            res.set_header("Vary", "Origin");
        }
    };
    server.Options(R"(/v1/.*)", [cfg](const httplib::Request& req, httplib::Response& res) {
        auto origin = req.get_header_value("Origin");
        if (!origin_allowed(cfg, origin)) {
            res.status = 403;
            return;
        }
        res.status = 204;
        res.set_header("Access-Control-Allow-Origin", origin);
        res.set_header("Vary", "Origin");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.set_header("Access-Control-Max-Age", "600");
    });
    server.Get("/v1/health", [cors](const httplib::Request& req, httplib::Response& res) {
        cors(req, res);
        res.set_content(R"({"status":"ok"})", "application/json");
    });
    server.Get("/v1/taxonomy", [cors, &service](const httplib::Request& req, httplib::Response& res) {
        cors(req, res);
        res.set_content(to_json(service.gateway().taxonomy()).dump(), "application/json");
    });
    server.Post("/v1/analyze", [cors, &service](const httplib::Request& req, httplib::Response& res) {
        cors(req, res);
        std::string url;
        try {
            auto body = nlohmann::json::parse(req.body);
            url = body.at("url").get<std::string>();
        } catch (const std::exception&) {
            res.status = 400;
            res.set_content(R"({"error":"request body must be {\"url\": \"...\"}"})", "application/json");
            return;
        }
        res.set_content(service.analyze_json(url), "application/json");
    });
}

} // namespace termscope
