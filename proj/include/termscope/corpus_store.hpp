#pragma once

// Canonical record types and the append-only JSONL corpus store.
//
// Layout under the corpus root:
//   websites.jsonl documents.jsonl terms.jsonl labels.jsonl  record logs
//   index.json                                             stage counts
//   pages/<sha256>.html                                    raw fetched bodies
//
// Each log is replayed on open; for keyed entities the last line wins. A
// torn final line (interrupted write) is ignored.

#include "termscope/url.hpp"
#include "termscope/util/hash.hpp"
#include "termscope/util/text.hpp"
#include "termscope/util/time.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace termscope {

namespace fs = std::filesystem;
using nlohmann::json;

enum class Source { Tranco, Fcw, Flos, Custom };
enum class ShoppingVerdict { Unknown, Shopping, NonShopping, Unreachable };
enum class ClassificationMode { UrlOnly, UrlHtml, UrlScreenshot };

inline std::string_view to_string(Source s) {
    switch (s) {
    case Source::Tranco: return "tranco";
    case Source::Fcw: return "fcw";
    case Source::Flos: return "flos";
    case Source::Custom: return "custom";
    }
    return "custom";
}

inline std::string_view to_string(ShoppingVerdict v) {
    switch (v) {
    case ShoppingVerdict::Unknown: return "unknown";
    case ShoppingVerdict::Shopping: return "shopping";
    case ShoppingVerdict::NonShopping: return "non_shopping";
    case ShoppingVerdict::Unreachable: return "unreachable";
    }
    return "unknown";
}

inline std::string_view to_string(ClassificationMode m) {
    switch (m) {
    case ClassificationMode::UrlOnly: return "url_only";
    case ClassificationMode::UrlHtml: return "url_html";
    case ClassificationMode::UrlScreenshot: return "url_screenshot";
    }
    return "url_html";
}

class StoreError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <class E, std::size_t N>
E parse_enum(std::string_view s, const E (&values)[N], const char* what) {
    for (auto v : values)
        if (to_string(v) == s) return v;
    throw StoreError(std::string("bad ") + what + ": " + std::string(s));
}

inline Source parse_source(std::string_view s) {
    static constexpr Source all[] = {Source::Tranco, Source::Fcw, Source::Flos, Source::Custom};
    return parse_enum(s, all, "source");
}

inline ShoppingVerdict parse_verdict(std::string_view s) {
    static constexpr ShoppingVerdict all[] = {ShoppingVerdict::Unknown, ShoppingVerdict::Shopping,
                                              ShoppingVerdict::NonShopping, ShoppingVerdict::Unreachable};
    return parse_enum(s, all, "shopping verdict");
}

inline ClassificationMode parse_mode(std::string_view s) {
    static constexpr ClassificationMode all[] = {ClassificationMode::UrlOnly, ClassificationMode::UrlHtml,
                                                 ClassificationMode::UrlScreenshot};
    return parse_enum(s, all, "classification mode");
}

inline constexpr std::string_view kUnknownLanguage = "unknown";

struct WebsiteRecord {
    std::string url;
    Source source = Source::Custom;
    std::optional<int> rank;
    ShoppingVerdict shopping_verdict = ShoppingVerdict::Unknown;
    std::string language{kUnknownLanguage};
    std::set<std::string> term_page_urls;
    Timestamp fetched_at{};

    // Provenance of the verdict fields.
    std::string homepage_status;
    std::string homepage_hash;
    std::optional<ClassificationMode> verdict_mode;
    std::string verdict_model;
    double language_confidence = 0.0;
    bool tc_discovered = false;

    friend bool operator==(const WebsiteRecord&, const WebsiteRecord&) = default;
};

struct TermsDocument {
    std::string website_url;
    std::string page_url;
    std::string fetch_status;
    std::string raw_body_hash;
    Timestamp extracted_at{};

    friend bool operator==(const TermsDocument&, const TermsDocument&) = default;
};

struct TermRecord {
    std::string id;
    std::string text;
    std::string website_url;
    std::string source_page_url;
    int position_index = 0;

    friend bool operator==(const TermRecord&, const TermRecord&) = default;
};

enum class Stage { Financial, Unfavorable };

inline std::string_view to_string(Stage s) { return s == Stage::Financial ? "financial" : "unfavorable"; }

inline Stage parse_stage(std::string_view s) {
    if (s == "financial") return Stage::Financial;
    if (s == "unfavorable") return Stage::Unfavorable;
    throw StoreError("bad stage: " + std::string(s));
}

inline constexpr std::string_view kNeedsReview = "needs_review";
inline constexpr std::string_view kBenign = "benign";
inline constexpr std::string_view kNonFinancial = "non_financial";
inline constexpr std::string_view kOthersLabel = "Others";

struct TermLabel {
    std::string term_id;
    Stage stage = Stage::Financial;
    std::string label;
    std::string model_id;
    int prompt_version = 0;
    std::string reply_ref;

    friend bool operator==(const TermLabel&, const TermLabel&) = default;
};

struct StageCounts {
    std::size_t queried = 0;
    std::size_t shopping = 0;
    std::size_t english = 0;
    std::size_t with_tc = 0;
    std::size_t term_count = 0;

    friend bool operator==(const StageCounts&, const StageCounts&) = default;
};

struct CorpusManifest {
    std::map<Source, StageCounts> per_source;

    StageCounts total() const {
        StageCounts t;
        for (const auto& [_, c] : per_source) {
            t.queried += c.queried;
            t.shopping += c.shopping;
            t.english += c.english;
            t.with_tc += c.with_tc;
            t.term_count += c.term_count;
        }
        return t;
    }

    bool monotone() const {
        for (const auto& [_, c] : per_source)
            if (!(c.queried >= c.shopping && c.shopping >= c.english && c.english >= c.with_tc)) return false;
        return true;
    }

    friend bool operator==(const CorpusManifest& a, const CorpusManifest& b) {
        auto nonzero = [](const CorpusManifest& m) {
            std::map<Source, StageCounts> out;
            for (const auto& [s, c] : m.per_source)
                if (!(c == StageCounts{})) out[s] = c;
            return out;
        };
        return nonzero(a) == nonzero(b);
    }
};

// ---- serialization -------------------------------------------------------

inline json to_json(const WebsiteRecord& w) {
    json j{{"url", w.url},
           {"source", to_string(w.source)},
           {"rank", w.rank ? json(*w.rank) : json(nullptr)},
           {"shopping_verdict", to_string(w.shopping_verdict)},
           {"language", w.language},
           {"term_page_urls", w.term_page_urls},
           {"fetched_at", format_rfc3339(w.fetched_at)},
           {"homepage_status", w.homepage_status},
           {"homepage_hash", w.homepage_hash},
           {"verdict_mode", w.verdict_mode ? json(to_string(*w.verdict_mode)) : json(nullptr)},
           {"verdict_model", w.verdict_model},
           {"language_confidence", w.language_confidence},
           {"tc_discovered", w.tc_discovered}};
    return j;
}

inline Timestamp timestamp_from_json(const json& j) {
    auto t = parse_rfc3339(j.get<std::string>());
    if (!t) throw StoreError("bad timestamp: " + j.get<std::string>());
    return *t;
}

inline WebsiteRecord website_from_json(const json& j) {
    WebsiteRecord w;
    w.url = j.at("url").get<std::string>();
    w.source = parse_source(j.at("source").get<std::string>());
    if (j.contains("rank") && !j["rank"].is_null()) w.rank = j["rank"].get<int>();
    w.shopping_verdict = parse_verdict(j.value("shopping_verdict", "unknown"));
    w.language = j.value("language", std::string(kUnknownLanguage));
    w.term_page_urls = j.value("term_page_urls", std::set<std::string>{});
    w.fetched_at = timestamp_from_json(j.at("fetched_at"));
    w.homepage_status = j.value("homepage_status", "");
    w.homepage_hash = j.value("homepage_hash", "");
    if (j.contains("verdict_mode") && !j["verdict_mode"].is_null())
        w.verdict_mode = parse_mode(j["verdict_mode"].get<std::string>());
    w.verdict_model = j.value("verdict_model", "");
    w.language_confidence = j.value("language_confidence", 0.0);
    w.tc_discovered = j.value("tc_discovered", false);
    return w;
}

inline json to_json(const TermsDocument& d) {
    return {{"website_url", d.website_url},
            {"page_url", d.page_url},
            {"fetch_status", d.fetch_status},
            {"raw_body_hash", d.raw_body_hash},
            {"extracted_at", format_rfc3339(d.extracted_at)}};
}

inline TermsDocument document_from_json(const json& j) {
    return {j.at("website_url").get<std::string>(), j.at("page_url").get<std::string>(),
            j.value("fetch_status", ""), j.value("raw_body_hash", ""), timestamp_from_json(j.at("extracted_at"))};
}

inline json to_json(const TermRecord& t) {
    return {{"id", t.id},
            {"text", t.text},
            {"website_url", t.website_url},
            {"source_page_url", t.source_page_url},
            {"position_index", t.position_index}};
}

inline TermRecord term_from_json(const json& j) {
    return {j.at("id").get<std::string>(), j.at("text").get<std::string>(), j.at("website_url").get<std::string>(),
            j.at("source_page_url").get<std::string>(), j.at("position_index").get<int>()};
}

inline json to_json(const TermLabel& l) {
    return {{"term_id", l.term_id},   {"stage", to_string(l.stage)},           {"label", l.label},
            {"model_id", l.model_id}, {"prompt_version", l.prompt_version}, {"reply_ref", l.reply_ref}};
}

inline TermLabel label_from_json(const json& j) {
    return {j.at("term_id").get<std::string>(), parse_stage(j.at("stage").get<std::string>()),
            j.at("label").get<std::string>(),   j.value("model_id", ""),
            j.value("prompt_version", 0),       j.value("reply_ref", "")};
}

inline json to_json(const CorpusManifest& m) {
    json per = json::object();
    for (const auto& [s, c] : m.per_source)
        per[std::string(to_string(s))] = {{"queried", c.queried},
                                          {"shopping", c.shopping},
                                          {"english", c.english},
                                          {"with_tc", c.with_tc},
                                          {"term_count", c.term_count}};
    return {{"per_source", per}};
}

// ---- term identity -------------------------------------------------------

inline bool is_normalized_term_text(std::string_view text) {
    if (text.empty()) return false;
    if (text != text::normalize_whitespace(text)) return false;
    for (std::size_t i = 0; i + 1 < text.size(); ++i)
        if (text[i] == '<' && std::isalpha(static_cast<unsigned char>(text[i + 1]))) return false;
    return true;
}

inline std::string term_id_for(std::string_view website_url, std::string_view normalized_text) {
    std::string host;
    try {
        host = parse_url(website_url).host;
    } catch (const UrlError&) {
        host = std::string(website_url);
    }
    return short_hash(host + "\n" + std::string(normalized_text));
}

// Builds a TermRecord from raw text; whitespace is normalized and the id
// derived from (host, text).
inline TermRecord make_term(std::string_view website_url, std::string_view page_url, int position,
                            std::string_view raw_text) {
    TermRecord t;
    t.text = text::normalize_whitespace(raw_text);
    t.website_url = std::string(website_url);
    t.source_page_url = std::string(page_url);
    t.position_index = position;
    t.id = term_id_for(website_url, t.text);
    return t;
}

// ---- queries -------------------------------------------------------------

struct WebsiteQuery {
    std::optional<Source> source;
    std::optional<ShoppingVerdict> verdict;
    std::optional<std::string> language;
    std::optional<bool> has_terms;
    std::function<bool(const WebsiteRecord&)> predicate;

    bool matches(const WebsiteRecord& w) const {
        if (source && w.source != *source) return false;
        if (verdict && w.shopping_verdict != *verdict) return false;
        if (language && w.language != *language) return false;
        if (has_terms && w.term_page_urls.empty() == *has_terms) return false;
        if (predicate && !predicate(w)) return false;
        return true;
    }
};

struct TermQuery {
    std::optional<std::string> website_url;
    std::optional<Source> source;
    // Keeps terms whose label at the given stage satisfies the predicate.
    std::optional<Stage> label_stage;
    std::function<bool(const std::string& label)> label_predicate;
    std::function<bool(const TermRecord&)> predicate;
};

// ---- store ---------------------------------------------------------------

class CorpusStore {
public:
    explicit CorpusStore(fs::path root) : root_(std::move(root)) {
        fs::create_directories(root_ / "pages");
        load();
    }

    CorpusStore(const CorpusStore&) = delete;
    CorpusStore& operator=(const CorpusStore&) = delete;

    const fs::path& root() const { return root_; }

    // Validates the record and stores it. A record whose fetched_at is older
    // than the stored one leaves the stored verdict fields untouched.
    WebsiteRecord upsert_website(WebsiteRecord record) {
        validate_website(record);
        std::unique_lock lock(mu_);
        auto it = websites_.find(record.url);
        if (it != websites_.end()) {
            if (record.fetched_at < it->second.fetched_at) return it->second;
            account_website(it->second, -1);
            it->second = std::move(record);
        } else {
            it = websites_.emplace(record.url, std::move(record)).first;
        }
        account_website(it->second, +1);
        append_line("websites.jsonl", to_json(it->second));
        write_index_locked();
        return it->second;
    }

    std::optional<WebsiteRecord> website(const std::string& url) const {
        std::shared_lock lock(mu_);
        auto it = websites_.find(url);
        if (it == websites_.end()) return std::nullopt;
        return it->second;
    }

    // Ordered by url.
    std::vector<WebsiteRecord> websites(const WebsiteQuery& q = {}) const {
        std::shared_lock lock(mu_);
        std::vector<WebsiteRecord> out;
        for (const auto& [_, w] : websites_)
            if (q.matches(w)) out.push_back(w);
        return out;
    }

    void put_document(const TermsDocument& doc) {
        std::unique_lock lock(mu_);
        if (!websites_.count(doc.website_url)) throw StoreError("unknown website: " + doc.website_url);
        documents_[{doc.website_url, doc.page_url}] = doc;
        append_line("documents.jsonl", to_json(doc));
    }

    std::vector<TermsDocument> documents(const std::optional<std::string>& website_url = std::nullopt) const {
        std::shared_lock lock(mu_);
        std::vector<TermsDocument> out;
        for (const auto& [key, d] : documents_)
            if (!website_url || key.first == *website_url) out.push_back(d);
        return out;
    }

    // Stores the document record and its terms; returns how many terms were
    // new. Exact duplicates within a website are skipped silently.
    std::size_t ingest_terms(const TermsDocument& doc, const std::vector<TermRecord>& terms) {
        for (const auto& t : terms) {
            if (t.website_url != doc.website_url)
                throw StoreError("term references website " + t.website_url + ", document is for " + doc.website_url);
            if (t.text.empty()) throw StoreError("term with empty text");
            if (!is_normalized_term_text(t.text)) throw StoreError("term text is not normalized: " + t.text);
            if (t.id != term_id_for(t.website_url, t.text)) throw StoreError("term id does not match content");
        }
        std::unique_lock lock(mu_);
        auto wit = websites_.find(doc.website_url);
        if (wit == websites_.end()) throw StoreError("unknown website: " + doc.website_url);
        documents_[{doc.website_url, doc.page_url}] = doc;
        append_line("documents.jsonl", to_json(doc));
        std::size_t stored = 0;
        for (const auto& t : terms) {
            if (!term_keys_.insert({t.website_url, t.text}).second) continue;
            terms_.push_back(t);
            term_index_[t.id] = terms_.size() - 1;
            manifest_.per_source[wit->second.source].term_count += 1;
            append_line("terms.jsonl", to_json(t));
            ++stored;
        }
        if (stored) write_index_locked();
        return stored;
    }

    std::optional<TermRecord> term(const std::string& id) const {
        std::shared_lock lock(mu_);
        auto it = term_index_.find(id);
        if (it == term_index_.end()) return std::nullopt;
        return terms_[it->second];
    }

    // Ordered by (website url, source page url, position index).
    std::vector<TermRecord> terms(const TermQuery& q = {}) const {
        std::shared_lock lock(mu_);
        std::vector<TermRecord> out;
        for (const auto& t : terms_) {
            if (q.website_url && t.website_url != *q.website_url) continue;
            if (q.source) {
                auto w = websites_.find(t.website_url);
                if (w == websites_.end() || w->second.source != *q.source) continue;
            }
            if (q.label_stage) {
                auto l = labels_.find({t.id, *q.label_stage});
                if (l == labels_.end()) continue;
                if (q.label_predicate && !q.label_predicate(l->second.label)) continue;
            }
            if (q.predicate && !q.predicate(t)) continue;
            out.push_back(t);
        }
        std::sort(out.begin(), out.end(), [](const TermRecord& a, const TermRecord& b) {
            return std::tie(a.website_url, a.source_page_url, a.position_index, a.id) <
                   std::tie(b.website_url, b.source_page_url, b.position_index, b.id);
        });
        return out;
    }

    void put_label(const TermLabel& label) {
        std::unique_lock lock(mu_);
        if (!term_index_.count(label.term_id)) throw StoreError("label for unknown term: " + label.term_id);
        labels_[{label.term_id, label.stage}] = label;
        append_line("labels.jsonl", to_json(label));
    }

    std::optional<TermLabel> label(const std::string& term_id, Stage stage) const {
        std::shared_lock lock(mu_);
        auto it = labels_.find({term_id, stage});
        if (it == labels_.end()) return std::nullopt;
        return it->second;
    }

    std::vector<TermLabel> labels(std::optional<Stage> stage = std::nullopt) const {
        std::shared_lock lock(mu_);
        std::vector<TermLabel> out;
        for (const auto& [key, l] : labels_)
            if (!stage || key.second == *stage) out.push_back(l);
        return out;
    }

    // Content-addressed raw page storage.
    std::string put_page(std::string_view body) {
        auto hash = sha256_hex(body);
        auto path = root_ / "pages" / (hash + ".html");
        std::unique_lock lock(mu_);
        if (!fs::exists(path)) {
            std::ofstream out(path, std::ios::binary);
            out.write(body.data(), static_cast<std::streamsize>(body.size()));
        }
        return hash;
    }

    std::optional<std::string> page(const std::string& hash) const {
        std::ifstream in(root_ / "pages" / (hash + ".html"), std::ios::binary);
        if (!in) return std::nullopt;
        return std::string(std::istreambuf_iterator<char>(in), {});
    }

    CorpusManifest manifest() const {
        std::shared_lock lock(mu_);
        return manifest_;
    }

    // Counts derived from scratch, for checking the incremental ones.
    CorpusManifest recompute_manifest() const {
        std::shared_lock lock(mu_);
        CorpusManifest m;
        for (const auto& [_, w] : websites_) add_website_counts(m, w, +1);
        for (const auto& t : terms_) {
            auto w = websites_.find(t.website_url);
            if (w != websites_.end()) m.per_source[w->second.source].term_count += 1;
        }
        return m;
    }

private:
    using DocKey = std::pair<std::string, std::string>;
    using LabelKey = std::pair<std::string, Stage>;

    static void validate_website(const WebsiteRecord& w) {
        if (!is_normalized(w.url)) throw StoreError("website url is not normalized: " + w.url);
        if ((w.source == Source::Tranco) != w.rank.has_value())
            throw StoreError("rank must be present exactly for tranco sources: " + w.url);
        if (w.rank && *w.rank <= 0) throw StoreError("rank must be positive: " + w.url);
        if (!w.term_page_urls.empty() &&
            (w.shopping_verdict != ShoppingVerdict::Shopping || w.language != "en"))
            throw StoreError("term pages recorded for a site that is not an English shopping site: " + w.url);
        for (const auto& u : w.term_page_urls)
            if (!is_normalized(u)) throw StoreError("term page url is not normalized: " + u);
    }

    static void add_website_counts(CorpusManifest& m, const WebsiteRecord& w, int sign) {
        auto& c = m.per_source[w.source];
        auto bump = [sign](std::size_t& v) { v = sign > 0 ? v + 1 : v - 1; };
        bump(c.queried);
        if (w.shopping_verdict == ShoppingVerdict::Shopping) {
            bump(c.shopping);
            if (w.language == "en") bump(c.english);
        }
        if (!w.term_page_urls.empty()) bump(c.with_tc);
    }

    void account_website(const WebsiteRecord& w, int sign) { add_website_counts(manifest_, w, sign); }

    void append_line(const std::string& file, const json& j) {
        std::ofstream out(root_ / file, std::ios::app);
        if (!out) throw StoreError("cannot append to " + (root_ / file).string());
        out << j.dump() << '\n';
        out.flush();
    }

    void write_index_locked() {
        auto tmp = root_ / "index.json.tmp";
        {
            std::ofstream out(tmp);
            out << to_json(manifest_).dump(2) << '\n';
        }
        fs::rename(tmp, root_ / "index.json");
    }

    template <class Fn> void replay(const std::string& file, Fn&& fn) {
        std::ifstream in(root_ / file);
        if (!in) return;
        std::string line;
        while (std::getline(in, line)) {
            if (text::trim(line).empty()) continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const json::parse_error&) {
                continue; // torn tail line
            }
            fn(j);
        }
    }

    void load() {
        replay("websites.jsonl", [&](const json& j) {
            auto w = website_from_json(j);
            websites_[w.url] = std::move(w);
        });
        replay("documents.jsonl", [&](const json& j) {
            auto d = document_from_json(j);
            documents_[{d.website_url, d.page_url}] = std::move(d);
        });
        replay("terms.jsonl", [&](const json& j) {
            auto t = term_from_json(j);
            if (!term_keys_.insert({t.website_url, t.text}).second) return;
            terms_.push_back(std::move(t));
            term_index_[terms_.back().id] = terms_.size() - 1;
        });
        replay("labels.jsonl", [&](const json& j) {
            auto l = label_from_json(j);
            labels_[{l.term_id, l.stage}] = std::move(l);
        });
        for (const auto& [_, w] : websites_) account_website(w, +1);
        for (const auto& t : terms_) {
            auto w = websites_.find(t.website_url);
            if (w != websites_.end()) manifest_.per_source[w->second.source].term_count += 1;
        }
    }

    struct PairHash {
        std::size_t operator()(const std::pair<std::string, std::string>& p) const {
            return std::hash<std::string>{}(p.first) * 31 + std::hash<std::string>{}(p.second);
        }
    };

    fs::path root_;
    mutable std::shared_mutex mu_;
    std::map<std::string, WebsiteRecord> websites_;
    std::map<DocKey, TermsDocument> documents_;
    std::vector<TermRecord> terms_;
    std::unordered_map<std::string, std::size_t> term_index_;
    std::unordered_set<std::pair<std::string, std::string>, PairHash> term_keys_;
    std::map<LabelKey, TermLabel> labels_;
    CorpusManifest manifest_;
};

} // namespace termscope
