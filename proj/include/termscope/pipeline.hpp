#pragma once

// Configuration and resumable pipeline stages over the corpus store.

#include "termscope/corpus_store.hpp"
#include "termscope/harvester.hpp"
#include "termscope/language.hpp"
#include "termscope/lens_service.hpp"
#include "termscope/llm_gateway.hpp"
#include "termscope/measure_eval.hpp"
#include "termscope/taxonomy.hpp"
#include "termscope/term_classifier.hpp"
#include "termscope/term_extractor.hpp"
#include "termscope/topic_miner.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace termscope {

inline constexpr int kExitSuccess = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitStageFailure = 3;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---- config ----------------------------------------------------------------

class Config {
public:
    static const std::map<std::string, std::string>& defaults() {
        static const std::map<std::string, std::string> d = {
            {"corpus", "corpus"},
            {"seed", "0"},
            {"sites", ""},
            {"model.endpoint", ""},
            {"model.id", "gpt-4o"},
            {"model.max_in_flight", "8"},
            {"model.rate_limit", "0"},
            {"model.max_retries", "2"},
            {"embedding.endpoint", "hash:256"},
            {"embedding.model", ""},
            {"cluster.eps", "0.15"},
            {"cluster.min_pts", "5"},
            {"topics.sample_size", "10"},
            {"topics.max_rounds", "3"},
            {"harvest.mode", "url_html"},
            {"crawl.depth", "2"},
            {"fetch.fixtures", ""},
            {"fetch.per_host_delay_ms", "1000"},
            {"fetch.max_hosts", "16"},
            {"fetch.honor_robots", "true"},
            {"fetch.user_agent", "termscope/1.0"},
            {"patterns.file", ""},
            {"taxonomy.file", ""},
            {"financial.file", ""},
            {"workers", "8"},
            {"lens.ttl_seconds", "86400"},
            {"lens.payment_mode", "heuristic"},
            {"serve.port", "8787"},
            {"serve.host", "127.0.0.1"},
            {"serve.cors_origins", ""},
        };
        return d;
    }

    Config() : values_(defaults()) {}

    // key = value lines; '#' starts a comment line.
    static Config parse(std::string_view content) {
        Config c;
        std::size_t lineno = 0;
        for (auto& raw : text::split(content, '\n')) {
            ++lineno;
            auto line = text::trim(raw);
            if (line.empty() || line.front() == '#') continue;
            auto eq = line.find('=');
            if (eq == std::string_view::npos)
                throw ConfigError("config line " + std::to_string(lineno) + " is not key = value");
            c.set(std::string(text::trim(line.substr(0, eq))), std::string(text::trim(line.substr(eq + 1))));
        }
        return c;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read config file: " + path);
        return parse(std::string((std::istreambuf_iterator<char>(in)), {}));
    }

    static std::string env_name(const std::string& key) {
        std::string e = "TERMSCOPE_";
        for (char ch : key) e.push_back(ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
        return e;
    }

    // TERMSCOPE_MODEL_ENDPOINT overrides model.endpoint, and so on.
    void apply_env() {
        for (const auto& [key, _] : defaults())
            if (const char* v = std::getenv(env_name(key).c_str())) values_[key] = v;
    }

    void set(const std::string& key, std::string value) {
        if (!defaults().count(key)) throw ConfigError("unknown config key: " + key);
        values_[key] = std::move(value);
    }

    const std::string& str(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key: " + key);
        return it->second;
    }

    long long integer(const std::string& key) const {
        const auto& v = str(key);
        try {
            std::size_t pos = 0;
            auto x = std::stoll(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + " must be an integer, got '" + v + "'");
        }
    }

    double real(const std::string& key) const {
        const auto& v = str(key);
        try {
            std::size_t pos = 0;
            auto x = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + " must be a number, got '" + v + "'");
        }
    }

    bool boolean(const std::string& key) const {
        auto v = text::to_lower(str(key));
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw ConfigError("config key " + key + " must be true or false, got '" + v + "'");
    }

    std::vector<std::string> list(const std::string& key) const {
        std::vector<std::string> out;
        for (auto& p : text::split(str(key), ','))
            if (auto t = text::trim(p); !t.empty()) out.emplace_back(t);
        return out;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

// ---- site lists ------------------------------------------------------------

struct SiteEntry {
    std::string url;
    Source source = Source::Custom;
    std::optional<int> rank;
};

// One site per line: "rank,domain" (Tranco) or "url[,source]".
inline std::vector<SiteEntry> parse_site_list(std::string_view content) {
    std::vector<SiteEntry> out;
    std::set<std::string> seen;
    std::size_t lineno = 0;
    for (auto& raw : text::split(content, '\n')) {
        ++lineno;
        auto line = text::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        auto fields = text::split(line, ',');
        for (auto& f : fields) f = std::string(text::trim(f));
        SiteEntry e;
        try {
            bool numeric = !fields[0].empty() && std::all_of(fields[0].begin(), fields[0].end(), ::isdigit);
            if (numeric) {
                if (fields.size() < 2) throw ConfigError("tranco line needs rank,domain");
                e.rank = std::stoi(fields[0]);
                e.source = Source::Tranco;
                e.url = normalize_url(fields[1]);
            } else {
                e.url = normalize_url(fields[0]);
                if (fields.size() > 1) e.source = parse_source(fields[1]);
                if (fields.size() > 2) e.rank = std::stoi(fields[2]);
            }
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& ex) {
            throw ConfigError("site list line " + std::to_string(lineno) + ": " + ex.what());
        }
        auto u = parse_url(e.url);
        u.path = "/";
        u.query.reset();
        e.url = normalize(u).str();
        if (seen.insert(e.url).second) out.push_back(std::move(e));
    }
    return out;
}

inline std::vector<SiteEntry> load_site_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read site list: " + path);
    return parse_site_list(std::string((std::istreambuf_iterator<char>(in)), {}));
}

// ---- runtime wiring ----------------------------------------------------------

struct Runtime {
    Config config;
    std::shared_ptr<CorpusStore> store;
    std::shared_ptr<HttpTransport> transport;
    std::shared_ptr<Gateway> gateway;
    LinkPatternSet patterns = default_link_patterns();

    std::shared_ptr<WebFetcher> new_fetcher() const {
        FetchOptions o;
        o.per_host_delay = std::chrono::milliseconds(config.integer("fetch.per_host_delay_ms"));
        o.max_hosts_in_flight = static_cast<std::size_t>(config.integer("fetch.max_hosts"));
        o.honor_robots = config.boolean("fetch.honor_robots");
        o.user_agent = config.str("fetch.user_agent");
        return std::make_shared<WebFetcher>(transport, o);
    }

    std::size_t workers() const { return static_cast<std::size_t>(std::max(1LL, config.integer("workers"))); }
};

inline std::shared_ptr<HttpTransport> make_transport(const Config& c) {
    const auto& fixtures = c.str("fetch.fixtures");
    if (!fixtures.empty()) {
        if (!std::filesystem::is_directory(fixtures)) throw ConfigError("fetch.fixtures is not a directory: " + fixtures);
        return FixtureTransport::from_directory(fixtures);
    }
    return std::make_shared<HttplibTransport>(c.str("fetch.user_agent"));
}

// Builds the model gateway lazily; stages that need no model never require
// an endpoint.
inline std::shared_ptr<Gateway> make_gateway(const Config& c, const std::filesystem::path& corpus) {
    const auto& endpoint = c.str("model.endpoint");
    if (endpoint.empty()) throw ConfigError("model.endpoint is not set");
    std::shared_ptr<ChatModel> model;
    try {
        model = make_chat_model(endpoint, c.str("model.id"));
    } catch (const std::exception& e) {
        throw ConfigError(std::string("cannot create model: ") + e.what());
    }
    GatewayConfig g;
    g.max_in_flight = static_cast<std::size_t>(c.integer("model.max_in_flight"));
    g.rate_limit_per_second = c.real("model.rate_limit");
    g.max_retries = static_cast<int>(c.integer("model.max_retries"));
    Taxonomy taxonomy = default_taxonomy();
    FinancialTemplate financial = default_financial_template();
    try {
        if (!c.str("taxonomy.file").empty()) taxonomy = load_taxonomy(c.str("taxonomy.file"));
        if (!c.str("financial.file").empty()) financial = load_financial_template(c.str("financial.file"));
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    std::filesystem::create_directories(corpus);
    auto cache = std::make_shared<ReplyCache>(corpus / "llm_cache.jsonl");
    return std::make_shared<Gateway>(model, g, cache, std::make_shared<SteadyTime>(), taxonomy, financial);
}

inline Runtime make_runtime(Config config, bool need_model) {
    Runtime rt;
    rt.config = std::move(config);
    std::filesystem::path corpus = rt.config.str("corpus");
    rt.store = std::make_shared<CorpusStore>(corpus);
    rt.transport = make_transport(rt.config);
    if (need_model) rt.gateway = make_gateway(rt.config, corpus);
    if (!rt.config.str("patterns.file").empty()) {
        try {
            rt.patterns = load_pattern_file(rt.config.str("patterns.file"));
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
    }
    return rt;
}

// ---- stages ------------------------------------------------------------------

struct StageResult {
    std::string stage;
    std::size_t processed = 0;
    std::size_t skipped = 0;
    std::size_t failed = 0;
    std::size_t model_calls = 0;
};

inline nlohmann::json to_json(const StageResult& r) {
    return {{"stage", r.stage}, {"processed", r.processed}, {"skipped", r.skipped}, {"failed", r.failed},
            {"model_calls", r.model_calls}};
}

// Fetches homepages of sites not yet harvested and records them.
inline StageResult stage_harvest(Runtime& rt, const std::vector<SiteEntry>& sites) {
    StageResult r{"harvest"};
    auto fetcher = rt.new_fetcher();
    std::vector<const SiteEntry*> todo;
    for (const auto& s : sites) {
        auto existing = rt.store->website(s.url);
        if (existing && !existing->homepage_status.empty()) ++r.skipped;
        else todo.push_back(&s);
    }
    std::mutex mu;
    parallel_for(todo.size(), rt.workers(), [&](std::size_t i) {
        const auto& s = *todo[i];
        auto ev = fetcher->fetch(s.url);
        WebsiteRecord w;
        w.url = s.url;
        w.source = s.source;
        w.rank = s.source == Source::Tranco ? s.rank : std::nullopt;
        w.fetched_at = now_utc();
        w.homepage_status = std::string(to_string(ev.fetch_status));
        if (ev.ok() && ev.html_body) w.homepage_hash = rt.store->put_page(*ev.html_body);
        else w.shopping_verdict = ShoppingVerdict::Unreachable;
        rt.store->upsert_website(w);
        std::lock_guard lock(mu);
        ++r.processed;
        if (!ev.ok()) ++r.failed;
    });
    return r;
}

// Shopping verdict plus language for harvested sites still unclassified.
inline StageResult stage_classify_sites(Runtime& rt) {
    StageResult r{"classify-sites"};
    auto mode = parse_mode(rt.config.str("harvest.mode"));
    if (mode == ClassificationMode::UrlScreenshot)
        throw ConfigError("url_screenshot mode needs a renderer, and none is configured");
    auto before = rt.gateway->model_calls();
    auto sites = rt.store->websites();
    std::vector<WebsiteRecord> todo;
    for (const auto& w : sites) {
        if (w.shopping_verdict != ShoppingVerdict::Unknown || w.homepage_hash.empty()) ++r.skipped;
        else todo.push_back(w);
    }
    std::mutex mu;
    try {
        parallel_for(todo.size(), rt.workers(), [&](std::size_t i) {
            auto w = todo[i];
            PageEvidence ev;
            ev.url = ev.final_url = w.url;
            ev.html_body = rt.store->page(w.homepage_hash);
            ev.fetch_status = ev.html_body ? FetchStatus::Ok : FetchStatus::NetworkError;
            auto verdict = classify_website(ev, mode, *rt.gateway);
            w.shopping_verdict = verdict.verdict;
            w.verdict_mode = mode;
            w.verdict_model = verdict.model_id;
            if (verdict.verdict == ShoppingVerdict::Shopping && ev.html_body) {
                try {
                    auto g = detect_language(html::visible_text(*ev.html_body));
                    w.language = g.code;
                    w.language_confidence = g.confidence;
                } catch (const InsufficientText&) {
                    w.language = std::string(kUnknownLanguage);
                }
            }
            rt.store->upsert_website(w);
            std::lock_guard lock(mu);
            ++r.processed;
            if (verdict.verdict == ShoppingVerdict::Unknown) ++r.failed;
        });
    } catch (const TransportError& e) {
        throw StageFailure(std::string("classify-sites failed: ") + e.what());
    }
    r.model_calls = rt.gateway->model_calls() - before;
    return r;
}

// Snowball terms-page discovery for English shopping sites.
inline StageResult stage_discover(Runtime& rt) {
    StageResult r{"discover-tc"};
    auto fetcher = rt.new_fetcher();
    LinkMatcher matcher(rt.patterns);
    const int depth = static_cast<int>(rt.config.integer("crawl.depth"));
    std::vector<WebsiteRecord> todo;
    for (const auto& w : rt.store->websites()) {
        bool eligible = w.shopping_verdict == ShoppingVerdict::Shopping && w.language == "en" && !w.homepage_hash.empty();
        if (!eligible || w.tc_discovered) ++r.skipped;
        else todo.push_back(w);
    }
    std::mutex mu;
    parallel_for(todo.size(), rt.workers(), [&](std::size_t i) {
        auto w = todo[i];
        auto docs = snowball_crawl(w.url, *fetcher, matcher, depth, rt.store->page(w.homepage_hash));
        for (auto& d : docs) {
            rt.store->put_page(d.body);
            rt.store->put_document(d.document);
            w.term_page_urls.insert(d.document.page_url);
        }
        w.tc_discovered = true;
        rt.store->upsert_website(w);
        std::lock_guard lock(mu);
        ++r.processed;
        if (docs.empty()) ++r.failed;
    });
    return r;
}

// Segments every stored terms document into terms.
inline StageResult stage_extract(Runtime& rt) {
    StageResult r{"extract"};
    WebsiteQuery with_terms;
    with_terms.has_terms = true;
    for (const auto& w : rt.store->websites(with_terms)) {
        for (const auto& d : rt.store->documents(w.url)) {
            if (d.fetch_status != "ok" || !w.term_page_urls.count(d.page_url)) continue;
            auto body = rt.store->page(d.raw_body_hash);
            if (!body) {
                ++r.failed;
                continue;
            }
            auto added = rt.store->ingest_terms(d, extract_terms(*body, w.url, d.page_url));
            r.processed += added;
            if (added == 0) ++r.skipped;
        }
    }
    return r;
}

inline StageResult stage_classify(Runtime& rt, Stage stage) {
    StageResult r{std::string("classify-") + std::string(to_string(stage))};
    PassOptions o;
    o.workers = rt.workers();
    auto report = run_pass(*rt.store, TermQuery{}, stage, *rt.gateway, o);
    r.processed = report.labeled;
    r.skipped = report.skipped;
    r.failed = report.needs_review;
    r.model_calls = report.model_calls;
    return r;
}

struct MeasurementResult {
    CorpusManifest manifest;
    CorpusStats stats;
    std::vector<StageResult> stages;
};

inline CorpusStats stage_measure(Runtime& rt, const std::optional<std::filesystem::path>& out,
                                 const std::optional<std::filesystem::path>& plots) {
    auto stats = compute_corpus_stats(*rt.store, rt.gateway ? rt.gateway->taxonomy() : default_taxonomy());
    if (out) {
        if (out->has_parent_path()) std::filesystem::create_directories(out->parent_path());
        std::ofstream f(*out, std::ios::trunc);
        f << to_json(stats).dump(2) << "\n";
    }
    if (plots) plot_series(stats, *plots);
    return stats;
}

// harvest, classify-sites, discover-tc, extract, both classification
// passes, measure. Each stage resumes from what the store already holds.
inline MeasurementResult run_measurement(Runtime& rt, const std::vector<SiteEntry>& sites,
                                         const std::optional<std::filesystem::path>& stats_out = std::nullopt,
                                         const std::optional<std::filesystem::path>& plots = std::nullopt) {
    MeasurementResult m;
    m.stages.push_back(stage_harvest(rt, sites));
    m.stages.push_back(stage_classify_sites(rt));
    m.stages.push_back(stage_discover(rt));
    m.stages.push_back(stage_extract(rt));
    m.stages.push_back(stage_classify(rt, Stage::Financial));
    m.stages.push_back(stage_classify(rt, Stage::Unfavorable));
    m.stats = stage_measure(rt, stats_out, plots);
    m.manifest = rt.store->manifest();
    return m;
}

// ---- topic discovery -------------------------------------------------------------

class MissingLabels : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Terms feeding topic discovery: pass-1 positives. Throws MissingLabels when
// terms exist but the financial pass has not run.
inline std::vector<TermRecord> topic_terms(const CorpusStore& store, const FinancialTemplate& financial) {
    auto all = store.terms();
    std::vector<TermRecord> out;
    std::size_t unlabeled = 0;
    for (auto& t : all) {
        auto l = store.label(t.id, Stage::Financial);
        if (!l) {
            ++unlabeled;
            continue;
        }
        if (is_financial_positive(financial, l->label)) out.push_back(std::move(t));
    }
    if (unlabeled > 0)
        throw MissingLabels(std::to_string(unlabeled) +
                            " terms have no financial label; run `termscope classify --stage financial` first");
    return out;
}

struct ClusterParams {
    double eps = 0.15;
    std::size_t min_pts = 5;
};

inline std::filesystem::path topics_dir(const Runtime& rt) { return std::filesystem::path(rt.config.str("corpus")) / "topics"; }

// Embeds pass-1 positives and clusters them; writes embeddings.json and
// clusters.json under <corpus>/topics.
inline ClusterAssignment stage_cluster(Runtime& rt, EmbeddingProvider& provider, const ClusterParams& params) {
    auto terms = topic_terms(*rt.store, rt.gateway ? rt.gateway->financial_template() : default_financial_template());
    auto batch = embed_terms(terms, provider);
    auto clusters = dbscan(batch, params.eps, params.min_pts, {rt.workers(), 256});
    auto dir = topics_dir(rt);
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "embeddings.json", std::ios::trunc) << to_json(batch).dump() << "\n";
    std::ofstream(dir / "clusters.json", std::ios::trunc) << to_json(clusters).dump(2) << "\n";
    return clusters;
}

inline ClusterAssignment load_clusters(const Runtime& rt) {
    auto path = topics_dir(rt) / "clusters.json";
    std::ifstream in(path);
    if (!in) throw MissingLabels("no clusters found at " + path.string() + "; run `termscope cluster` first");
    return cluster_assignment_from_json(nlohmann::json::parse(in));
}

// Induction loop over stored clusters; writes the template (with its
// changelog) and coverage.json.
inline InductionResult stage_topics(Runtime& rt, TopicTemplate initial, Reviewer& reviewer,
                                    const std::filesystem::path& template_out, const InductionParams& params) {
    auto clusters = load_clusters(rt);
    std::unordered_map<std::string, std::string> text_of;
    for (const auto& id : clusters.term_ids)
        if (auto t = rt.store->term(id)) text_of[id] = t->text;
    InductionResult result;
    try {
        result = run_induction_loop(clusters, text_of, std::move(initial), *rt.gateway, reviewer, params);
    } catch (const TransportError& e) {
        throw StageFailure(std::string("topic induction failed: ") + e.what());
    }
    if (template_out.has_parent_path()) std::filesystem::create_directories(template_out.parent_path());
    save_topic_template(result.final_template, template_out.string());
    auto dir = topics_dir(rt);
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "coverage.json", std::ios::trunc) << to_json(result.coverage).dump(2) << "\n";
    return result;
}

inline InductionResult run_topic_discovery(Runtime& rt, EmbeddingProvider& provider, const ClusterParams& cparams,
                                           TopicTemplate initial, Reviewer& reviewer,
                                           const std::filesystem::path& template_out, const InductionParams& params) {
    stage_cluster(rt, provider, cparams);
    return stage_topics(rt, std::move(initial), reviewer, template_out, params);
}

} // namespace termscope
