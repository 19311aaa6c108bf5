#pragma once

// Embedding, DBSCAN clustering, cluster sampling and reviewed topic-template
// induction.

#include "termscope/corpus_store.hpp"
#include "termscope/llm_gateway.hpp"
#include "termscope/taxonomy.hpp"
#include "termscope/util/hash.hpp"
#include "termscope/util/parallel.hpp"
#include "termscope/util/rng.hpp"
#include "termscope/util/text.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cmath>
#include <deque>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace termscope {

class TopicError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionMismatch : public TopicError {
public:
    using TopicError::TopicError;
};

// ---- embeddings ------------------------------------------------------------

struct EmbeddingBatch {
    std::vector<std::string> term_ids;
    std::vector<std::vector<double>> vectors;
    std::string provider_id;
    std::size_t dimension = 0;

    std::size_t size() const { return term_ids.size(); }
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string id() const = 0;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
};

// Signed feature hashing of lowercased word unigrams and bigrams.
class HashEmbeddingProvider final : public EmbeddingProvider {
public:
    explicit HashEmbeddingProvider(std::size_t dim) : dim_(dim) {
        if (dim == 0) throw TopicError("embedding dimension must be positive");
    }

    std::string id() const override { return "hash:" + std::to_string(dim_); }

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        std::vector<std::vector<double>> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(embed_one(t));
        return out;
    }

private:
    std::vector<double> embed_one(std::string_view s) const {
        std::vector<std::string> words;
        std::string cur;
        for (unsigned char c : s) {
            if (std::isalnum(c) || c >= 0x80) {
                cur.push_back(static_cast<char>(std::tolower(c)));
            } else if (!cur.empty()) {
                words.push_back(std::move(cur));
                cur.clear();
            }
        }
        if (!cur.empty()) words.push_back(std::move(cur));
        std::vector<double> v(dim_, 0.0);
        auto add = [&](const std::string& feature) {
            auto h = fnv1a64(feature);
            v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
        };
        for (std::size_t i = 0; i < words.size(); ++i) {
            add(words[i]);
            if (i + 1 < words.size()) add(words[i] + " " + words[i + 1]);
        }
        bool zero = std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
        if (zero) v[0] = 1.0;
        return v;
    }

    std::size_t dim_;
};

// Vectors looked up by exact text from a JSONL file of {"text", "vector"}.
class MockEmbeddingProvider final : public EmbeddingProvider {
public:
    MockEmbeddingProvider() = default;

    MockEmbeddingProvider& set(std::string text, std::vector<double> v) {
        table_[std::move(text)] = std::move(v);
        return *this;
    }

    static std::unique_ptr<MockEmbeddingProvider> from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw TopicError("cannot open embedding file: " + path);
        auto p = std::make_unique<MockEmbeddingProvider>();
        p->source_ = path;
        std::string line;
        while (std::getline(in, line)) {
            if (text::trim(line).empty()) continue;
            auto j = nlohmann::json::parse(line);
            p->set(j.at("text").get<std::string>(), j.at("vector").get<std::vector<double>>());
        }
        return p;
    }

    std::string id() const override { return "mock:" + source_; }

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        std::vector<std::vector<double>> out;
        for (const auto& t : texts) {
            auto it = table_.find(t);
            if (it == table_.end()) throw TopicError("mock embedding missing for text: " + t.substr(0, 60));
            out.push_back(it->second);
        }
        return out;
    }

private:
    std::string source_;
    std::unordered_map<std::string, std::vector<double>> table_;
};

// OpenAI-style /v1/embeddings endpoint.
class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(std::string endpoint, std::string model) : endpoint_(parse_url(endpoint)), model_(std::move(model)) {
        if (const char* key = std::getenv("TERMSCOPE_LLM_KEY")) api_key_ = key;
    }

    std::string id() const override { return model_; }

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
        nlohmann::json body{{"model", model_}, {"input", texts}};
        httplib::Client client(endpoint_.origin());
        client.set_read_timeout(std::chrono::seconds(120));
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        auto res = client.Post(endpoint_.path, headers, body.dump(), "application/json");
        if (!res) throw TransportError("embedding request failed: " + httplib::to_string(res.error()));
        if (res->status < 200 || res->status >= 300)
            throw TransportError("embedding endpoint returned HTTP " + std::to_string(res->status));
        auto j = nlohmann::json::parse(res->body);
        std::vector<std::vector<double>> out;
        for (const auto& d : j.at("data")) out.push_back(d.at("embedding").get<std::vector<double>>());
        if (out.size() != texts.size()) throw TransportError("embedding count mismatch");
        return out;
    }

private:
    Url endpoint_;
    std::string model_;
    std::string api_key_;
};

// "mock:<file>", "hash:<dim>", or an http(s) endpoint.
inline std::shared_ptr<EmbeddingProvider> make_embedding_provider(const std::string& endpoint, const std::string& model) {
    if (endpoint.rfind("mock:", 0) == 0) return MockEmbeddingProvider::from_file(endpoint.substr(5));
    if (endpoint.rfind("hash:", 0) == 0) return std::make_shared<HashEmbeddingProvider>(std::stoul(endpoint.substr(5)));
    return std::make_shared<HttpEmbeddingProvider>(endpoint, model);
}

inline std::vector<double> l2_normalized(std::vector<double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    if (!(s > 0.0) || !std::isfinite(s)) throw TopicError("cannot normalize a zero or non-finite vector");
    double n = std::sqrt(s);
    for (double& x : v) x /= n;
    return v;
}

// Embeds in provider batches; every vector is L2-normalized here. A batch
// whose dimension differs from earlier ones (or from expected_dim) fails.
inline EmbeddingBatch embed_terms(const std::vector<TermRecord>& terms, EmbeddingProvider& provider,
                                  std::size_t batch_size = 64, std::optional<std::size_t> expected_dim = std::nullopt) {
    EmbeddingBatch batch;
    batch.provider_id = provider.id();
    batch.dimension = expected_dim.value_or(0);
    batch_size = std::max<std::size_t>(1, batch_size);
    for (std::size_t start = 0; start < terms.size(); start += batch_size) {
        std::vector<std::string> texts;
        for (std::size_t i = start; i < std::min(terms.size(), start + batch_size); ++i) texts.push_back(terms[i].text);
        auto vecs = provider.embed(texts);
        if (vecs.size() != texts.size()) throw TopicError("provider returned wrong number of vectors");
        for (std::size_t k = 0; k < vecs.size(); ++k) {
            if (batch.dimension == 0) batch.dimension = vecs[k].size();
            if (vecs[k].size() != batch.dimension)
                throw DimensionMismatch("embedding dimension " + std::to_string(vecs[k].size()) + " does not match " +
                                        std::to_string(batch.dimension));
            batch.term_ids.push_back(terms[start + k].id);
            batch.vectors.push_back(l2_normalized(std::move(vecs[k])));
        }
    }
    return batch;
}

inline nlohmann::json to_json(const EmbeddingBatch& b) {
    return {{"provider_id", b.provider_id}, {"dimension", b.dimension}, {"term_ids", b.term_ids}, {"vectors", b.vectors}};
}

inline EmbeddingBatch embedding_batch_from_json(const nlohmann::json& j) {
    EmbeddingBatch b;
    b.provider_id = j.value("provider_id", "");
    b.dimension = j.at("dimension").get<std::size_t>();
    b.term_ids = j.at("term_ids").get<std::vector<std::string>>();
    b.vectors = j.at("vectors").get<std::vector<std::vector<double>>>();
    if (b.term_ids.size() != b.vectors.size()) throw TopicError("embedding batch ids and vectors differ in length");
    for (const auto& v : b.vectors)
        if (v.size() != b.dimension) throw DimensionMismatch("stored vector has wrong dimension");
    return b;
}

// ---- DBSCAN ----------------------------------------------------------------

inline constexpr int kNoise = -1;

struct ClusterAssignment {
    double eps = 0.0;
    std::size_t min_pts = 1;
    std::string metric = "cosine";
    std::vector<std::string> term_ids;
    std::vector<int> labels; // cluster id or kNoise, parallel to term_ids
    std::vector<bool> core;

    std::size_t cluster_count() const {
        int m = -1;
        for (int l : labels) m = std::max(m, l);
        return static_cast<std::size_t>(m + 1);
    }

    std::size_t noise_count() const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kNoise)); }

    // Point indices of a cluster (or the noise pool), in input order.
    std::vector<std::size_t> members(int cluster) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == cluster) out.push_back(i);
        return out;
    }
};

inline double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
    return 1.0 - dot;
}

struct DbscanOptions {
    std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    // Rows per work unit when scanning pairwise distances.
    std::size_t block_rows = 256;
};

// Exact DBSCAN over cosine distance without storing neighborhoods. Clusters
// are the connected components of core points, numbered by their lowest
// core index; a border point joins the cluster of its lowest-index core
// neighbor.
inline ClusterAssignment dbscan(const EmbeddingBatch& batch, double eps, std::size_t min_pts,
                                const DbscanOptions& options = {}) {
    if (!(eps > 0.0)) throw TopicError("eps must be positive");
    if (min_pts < 1) throw TopicError("min_pts must be at least 1");
    ClusterAssignment out;
    out.eps = eps;
    out.min_pts = min_pts;
    out.term_ids = batch.term_ids;
    const std::size_t n = batch.size();
    out.labels.assign(n, kNoise);
    out.core.assign(n, false);
    if (n == 0) return out;
    const auto& v = batch.vectors;
    const std::size_t block = std::max<std::size_t>(1, options.block_rows);
    const std::size_t blocks = (n + block - 1) / block;

    std::vector<std::size_t> count(n, 0);
    parallel_for(blocks, options.workers, [&](std::size_t b) {
        for (std::size_t i = b * block; i < std::min(n, (b + 1) * block); ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (cosine_distance(v[i], v[j]) <= eps) ++count[i];
    });
    for (std::size_t i = 0; i < n; ++i) out.core[i] = count[i] >= min_pts;

    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::mutex uf_mu;
    std::vector<std::size_t> first_core(n, n);
    parallel_for(blocks, options.workers, [&](std::size_t b) {
        std::vector<std::pair<std::size_t, std::size_t>> edges;
        for (std::size_t i = b * block; i < std::min(n, (b + 1) * block); ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (!out.core[j] || cosine_distance(v[i], v[j]) > eps) continue;
                if (out.core[i]) {
                    if (j > i) edges.emplace_back(i, j);
                } else if (first_core[i] == n) {
                    first_core[i] = j;
                }
            }
        }
        std::lock_guard lock(uf_mu);
        for (auto [a, c] : edges) {
            auto ra = find(a), rc = find(c);
            if (ra != rc) parent[std::max(ra, rc)] = std::min(ra, rc);
        }
    });

    std::unordered_map<std::size_t, int> cluster_of_root;
    int next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!out.core[i]) continue;
        auto r = find(i);
        auto [it, inserted] = cluster_of_root.emplace(r, next);
        if (inserted) ++next;
        out.labels[i] = it->second;
    }
    for (std::size_t i = 0; i < n; ++i)
        if (!out.core[i] && first_core[i] != n) out.labels[i] = out.labels[first_core[i]];
    return out;
}

inline nlohmann::json to_json(const ClusterAssignment& a) {
    nlohmann::json core = nlohmann::json::array();
    for (bool c : a.core) core.push_back(c);
    return {{"eps", a.eps},           {"min_pts", a.min_pts}, {"metric", a.metric},
            {"term_ids", a.term_ids}, {"labels", a.labels},   {"core", core}};
}

inline ClusterAssignment cluster_assignment_from_json(const nlohmann::json& j) {
    ClusterAssignment a;
    a.eps = j.at("eps").get<double>();
    a.min_pts = j.at("min_pts").get<std::size_t>();
    a.metric = j.value("metric", "cosine");
    a.term_ids = j.at("term_ids").get<std::vector<std::string>>();
    a.labels = j.at("labels").get<std::vector<int>>();
    for (const auto& c : j.at("core")) a.core.push_back(c.get<bool>());
    if (a.labels.size() != a.term_ids.size() || a.core.size() != a.term_ids.size())
        throw TopicError("cluster assignment arrays differ in length");
    return a;
}

// k term ids drawn without replacement (all members when the cluster is
// smaller). kNoise samples the noise pool.
inline std::vector<std::string> sample_cluster(const ClusterAssignment& a, int cluster, std::size_t k, std::uint64_t seed) {
    if (cluster != kNoise && (cluster < 0 || static_cast<std::size_t>(cluster) >= a.cluster_count()))
        throw TopicError("unknown cluster id " + std::to_string(cluster));
    auto idx = a.members(cluster);
    SeededRng rng(seed);
    rng.shuffle(idx);
    if (idx.size() > k) idx.resize(k);
    std::vector<std::string> out;
    for (auto i : idx) out.push_back(a.term_ids[i]);
    return out;
}

// ---- topic template --------------------------------------------------------

struct Topic {
    std::string name;
    std::string description;
    std::set<std::string> exemplars;

    friend bool operator==(const Topic&, const Topic&) = default;
};

enum class TemplateAction { Add, Merge, Rename, Reject };

inline std::string_view to_string(TemplateAction a) {
    switch (a) {
    case TemplateAction::Add: return "add";
    case TemplateAction::Merge: return "merge";
    case TemplateAction::Rename: return "rename";
    case TemplateAction::Reject: return "reject";
    }
    return "add";
}

inline TemplateAction parse_template_action(std::string_view s) {
    for (auto a : {TemplateAction::Add, TemplateAction::Merge, TemplateAction::Rename, TemplateAction::Reject})
        if (to_string(a) == s) return a;
    throw TopicError("bad template action: " + std::string(s));
}

// One changelog entry carries everything needed to replay it.
struct ChangeEntry {
    int version = 0;
    TemplateAction action = TemplateAction::Add;
    std::string actor;
    std::string topic;       // added/merged/renamed/rejected name
    std::string target;      // merge destination or new name
    std::string description; // for add
    std::set<std::string> exemplars;

    friend bool operator==(const ChangeEntry&, const ChangeEntry&) = default;
};

class TopicTemplate {
public:
    int version() const { return version_; }
    const std::vector<Topic>& topics() const { return topics_; }
    const std::vector<ChangeEntry>& changelog() const { return changelog_; }

    const Topic* find(std::string_view name) const {
        auto key = text::label_key(name);
        for (const auto& t : topics_)
            if (text::label_key(t.name) == key) return &t;
        return nullptr;
    }

    TopicTemplate add(std::string name, std::string description, std::set<std::string> exemplars, std::string actor) const {
        return apply({version_ + 1, TemplateAction::Add, std::move(actor), std::move(name), "", std::move(description),
                      std::move(exemplars)});
    }

    // Folds `source` into `target`. `source` may be an existing topic or a
    // proposal that never entered the template.
    TopicTemplate merge(std::string source, std::string target, std::set<std::string> exemplars, std::string actor) const {
        return apply({version_ + 1, TemplateAction::Merge, std::move(actor), std::move(source), std::move(target), "",
                      std::move(exemplars)});
    }

    TopicTemplate rename(std::string from, std::string to, std::string actor) const {
        return apply({version_ + 1, TemplateAction::Rename, std::move(actor), std::move(from), std::move(to), "", {}});
    }

    TopicTemplate reject(std::string proposal, std::string actor) const {
        return apply({version_ + 1, TemplateAction::Reject, std::move(actor), std::move(proposal), "", "", {}});
    }

    TopicTemplate apply(const ChangeEntry& e) const {
        if (e.version != version_ + 1) throw TopicError("changelog entry version out of sequence");
        TopicTemplate next = *this;
        switch (e.action) {
        case TemplateAction::Add:
            if (e.topic.empty()) throw TopicError("topic name must not be empty");
            if (find(e.topic)) throw TopicError("duplicate topic name: " + e.topic);
            next.topics_.push_back({e.topic, e.description, e.exemplars});
            break;
        case TemplateAction::Merge: {
            auto* dst = next.find_mut(e.target);
            if (!dst) throw TopicError("merge into unknown topic: " + e.target);
            dst->exemplars.insert(e.exemplars.begin(), e.exemplars.end());
            auto src_key = text::label_key(e.topic);
            if (src_key != text::label_key(e.target)) {
                for (auto it = next.topics_.begin(); it != next.topics_.end(); ++it) {
                    if (text::label_key(it->name) != src_key) continue;
                    auto moved = it->exemplars;
                    next.topics_.erase(it);
                    next.find_mut(e.target)->exemplars.insert(moved.begin(), moved.end());
                    break;
                }
            }
            break;
        }
        case TemplateAction::Rename: {
            auto* t = next.find_mut(e.topic);
            if (!t) throw TopicError("rename of unknown topic: " + e.topic);
            if (find(e.target) && text::label_key(e.target) != text::label_key(e.topic))
                throw TopicError("duplicate topic name: " + e.target);
            t->name = e.target;
            break;
        }
        case TemplateAction::Reject:
            break;
        }
        next.version_ = e.version;
        next.changelog_.push_back(e);
        return next;
    }

    static TopicTemplate replay(const std::vector<ChangeEntry>& log) {
        TopicTemplate t;
        for (const auto& e : log) t = t.apply(e);
        return t;
    }

    friend bool operator==(const TopicTemplate& a, const TopicTemplate& b) {
        return a.version_ == b.version_ && a.topics_ == b.topics_ && a.changelog_ == b.changelog_;
    }

private:
    Topic* find_mut(std::string_view name) {
        auto key = text::label_key(name);
        for (auto& t : topics_)
            if (text::label_key(t.name) == key) return &t;
        return nullptr;
    }

    int version_ = 0;
    std::vector<Topic> topics_;
    std::vector<ChangeEntry> changelog_;
};

// Seeds a template with the financial categories (Others excluded).
inline TopicTemplate topic_template_from_financial(const FinancialTemplate& tpl, const std::string& actor = "seed") {
    TopicTemplate t;
    for (const auto& c : tpl.categories)
        if (c.name != "Others") t = t.add(c.name, c.description, {}, actor);
    return t;
}

inline nlohmann::json to_json(const TopicTemplate& t) {
    nlohmann::json topics = nlohmann::json::array(), log = nlohmann::json::array();
    for (const auto& x : t.topics())
        topics.push_back({{"name", x.name}, {"description", x.description}, {"exemplars", x.exemplars}});
    for (const auto& e : t.changelog())
        log.push_back({{"version", e.version},
                       {"action", to_string(e.action)},
                       {"actor", e.actor},
                       {"topic", e.topic},
                       {"target", e.target},
                       {"description", e.description},
                       {"exemplars", e.exemplars}});
    return {{"version", t.version()}, {"topics", topics}, {"changelog", log}};
}

// Rebuilds the template from its changelog and checks it against the
// stored topic list.
inline TopicTemplate topic_template_from_json(const nlohmann::json& j) {
    std::vector<ChangeEntry> log;
    for (const auto& e : j.at("changelog"))
        log.push_back({e.at("version").get<int>(), parse_template_action(e.at("action").get<std::string>()),
                       e.value("actor", ""), e.value("topic", ""), e.value("target", ""), e.value("description", ""),
                       e.value("exemplars", std::set<std::string>{})});
    auto t = TopicTemplate::replay(log);
    if (j.contains("version") && j["version"].get<int>() != t.version())
        throw TopicError("template version does not match its changelog");
    if (j.contains("topics") && j["topics"].size() != t.topics().size())
        throw TopicError("template topics do not match its changelog");
    return t;
}

inline TopicTemplate load_topic_template(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TopicError("cannot open topic template: " + path);
    return topic_template_from_json(nlohmann::json::parse(in));
}

inline void save_topic_template(const TopicTemplate& t, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    out << to_json(t).dump(2) << "\n";
    if (!out) throw TopicError("cannot write topic template: " + path);
}

// ---- topic assignment ------------------------------------------------------

enum class DecisionKind { Existing, Proposed, NeedsReview };

inline std::string_view to_string(DecisionKind k) {
    switch (k) {
    case DecisionKind::Existing: return "existing";
    case DecisionKind::Proposed: return "proposed";
    case DecisionKind::NeedsReview: return "needs_review";
    }
    return "needs_review";
}

struct TopicDecision {
    DecisionKind kind = DecisionKind::NeedsReview;
    int cluster = kNoise;
    std::string topic;
    std::string description;
    std::string raw_reply;
    std::vector<std::string> sample_ids;
};

namespace topic_detail {

inline constexpr char kSep = '\x1f';

// Encodes the decision as "E<sep>name" or "N<sep>name<sep>description".
inline std::optional<std::string> parse_topic_reply(const TopicTemplate& tpl, std::string_view raw) {
    auto line = std::string(text::trim(raw));
    if (auto nl = line.find('\n'); nl != std::string::npos) {
        // Only single-line replies are accepted.
        if (!text::trim(std::string_view(line).substr(nl)).empty()) return std::nullopt;
        line.resize(nl);
    }
    if (text::starts_with_icase(line, "new:")) {
        auto rest = std::string(text::trim(std::string_view(line).substr(4)));
        std::size_t cut = std::string::npos, len = 0;
        for (std::string_view sep : {" — ", " – ", " - ", "—", "–"}) {
            auto p = rest.find(sep);
            if (p != std::string::npos && p < cut) {
                cut = p;
                len = sep.size();
            }
        }
        if (cut == std::string::npos) return std::nullopt;
        auto name = std::string(text::trim(std::string_view(rest).substr(0, cut)));
        auto desc = std::string(text::trim(std::string_view(rest).substr(cut + len)));
        if (name.empty() || desc.empty()) return std::nullopt;
        return "N" + std::string(1, kSep) + name + kSep + desc;
    }
    if (const auto* t = tpl.find(text::normalize_reply(line))) return "E" + std::string(1, kSep) + t->name;
    return std::nullopt;
}

} // namespace topic_detail

inline std::string topic_payload(const std::vector<std::string>& sample_texts, const TopicTemplate& tpl) {
    std::string p = "Topic template:\n";
    for (const auto& t : tpl.topics()) p += "- " + t.name + ": " + t.description + "\n";
    p += "\nSample terms:\n";
    for (std::size_t i = 0; i < sample_texts.size(); ++i) p += std::to_string(i + 1) + ". " + sample_texts[i] + "\n";
    return p;
}

inline TopicDecision assign_topic(const std::vector<std::string>& sample_texts, const TopicTemplate& tpl, Gateway& gateway) {
    TopicDecision d;
    auto reply = gateway.query(PromptName::TopicAssignment, topic_payload(sample_texts, tpl),
                               [&tpl](std::string_view raw) { return topic_detail::parse_topic_reply(tpl, raw); });
    d.raw_reply = reply.raw;
    if (!reply.label) return d;
    auto parts = text::split(*reply.label, topic_detail::kSep);
    if (parts.at(0) == "E") {
        d.kind = DecisionKind::Existing;
        d.topic = parts.at(1);
    } else {
        d.kind = DecisionKind::Proposed;
        d.topic = parts.at(1);
        d.description = parts.at(2);
    }
    return d;
}

// ---- review ----------------------------------------------------------------

struct ReviewAction {
    enum class Kind { Accept, Reject, MergeInto, Defer } kind = Kind::Accept;
    std::string target;      // merge destination
    std::string name;        // overrides the proposed name on accept
    std::string description; // overrides the proposed description on accept

    static ReviewAction accept(std::string name = "", std::string description = "") {
        return {Kind::Accept, "", std::move(name), std::move(description)};
    }
    static ReviewAction reject() { return {Kind::Reject, "", "", ""}; }
    static ReviewAction merge_into(std::string topic) { return {Kind::MergeInto, std::move(topic), "", ""}; }
    static ReviewAction defer() { return {Kind::Defer, "", "", ""}; }
};

// Applies a reviewer action to a proposed or needs_review decision. Defer
// leaves the template untouched.
inline TopicTemplate review_decision(const TopicTemplate& tpl, const TopicDecision& decision, const ReviewAction& action,
                                     const std::string& actor = "reviewer") {
    if (decision.kind == DecisionKind::Existing) throw TopicError("existing-topic decisions need no review");
    std::set<std::string> exemplars(decision.sample_ids.begin(), decision.sample_ids.end());
    switch (action.kind) {
    case ReviewAction::Kind::Accept: {
        auto name = action.name.empty() ? decision.topic : action.name;
        auto desc = action.description.empty() ? decision.description : action.description;
        if (name.empty()) throw TopicError("accepting a needs_review decision requires a topic name");
        return tpl.add(name, desc, exemplars, actor);
    }
    case ReviewAction::Kind::Reject:
        return tpl.reject(decision.topic.empty() ? decision.raw_reply : decision.topic, actor);
    case ReviewAction::Kind::MergeInto:
        if (!tpl.find(action.target)) throw TopicError("merge into unknown topic: " + action.target);
        return tpl.merge(decision.topic.empty() ? action.target : decision.topic, action.target, exemplars, actor);
    case ReviewAction::Kind::Defer:
        return tpl;
    }
    return tpl;
}

class Reviewer {
public:
    virtual ~Reviewer() = default;
    virtual std::string name() const = 0;
    virtual ReviewAction review(const TopicDecision& decision, const TopicTemplate& tpl,
                                const std::vector<std::string>& sample_texts) = 0;
};

// Accepts proposals and defers needs_review decisions.
class AutoAcceptReviewer final : public Reviewer {
public:
    std::string name() const override { return "auto-accept"; }
    ReviewAction review(const TopicDecision& d, const TopicTemplate&, const std::vector<std::string>&) override {
        return d.kind == DecisionKind::Proposed ? ReviewAction::accept() : ReviewAction::defer();
    }
};

// Replays a fixed script of actions, then falls back to a default.
class ScriptedReviewer final : public Reviewer {
public:
    explicit ScriptedReviewer(std::deque<ReviewAction> script, ReviewAction fallback = ReviewAction::defer())
        : script_(std::move(script)), fallback_(std::move(fallback)) {}
    std::string name() const override { return "scripted"; }
    ReviewAction review(const TopicDecision&, const TopicTemplate&, const std::vector<std::string>&) override {
        if (script_.empty()) return fallback_;
        auto a = script_.front();
        script_.pop_front();
        return a;
    }

private:
    std::deque<ReviewAction> script_;
    ReviewAction fallback_;
};

// Terminal prompt loop: a(ccept) [name], r(eject), m(erge) <topic>, d(efer).
class InteractiveReviewer final : public Reviewer {
public:
    InteractiveReviewer(std::istream& in = std::cin, std::ostream& out = std::cout) : in_(in), out_(out) {}
    std::string name() const override { return "interactive"; }

    ReviewAction review(const TopicDecision& d, const TopicTemplate& tpl, const std::vector<std::string>& samples) override {
        out_ << "\nCluster " << d.cluster << " (" << to_string(d.kind) << ")\n";
        if (d.kind == DecisionKind::Proposed) out_ << "Proposed topic: " << d.topic << " - " << d.description << "\n";
        else out_ << "Model reply: " << d.raw_reply << "\n";
        for (std::size_t i = 0; i < samples.size(); ++i) out_ << "  " << (i + 1) << ". " << samples[i].substr(0, 200) << "\n";
        for (;;) {
            out_ << "[a]ccept [name] | [r]eject | [m]erge <topic> | [d]efer > " << std::flush;
            std::string line;
            if (!std::getline(in_, line)) return ReviewAction::defer();
            auto t = std::string(text::trim(line));
            if (t.empty()) continue;
            auto arg = std::string(text::trim(std::string_view(t).substr(std::min(t.size(), t.find(' ') == std::string::npos ? t.size() : t.find(' ')))));
            switch (std::tolower(static_cast<unsigned char>(t[0]))) {
            case 'a':
                if (d.kind != DecisionKind::Proposed && arg.empty()) {
                    out_ << "a topic name is required\n";
                    continue;
                }
                return ReviewAction::accept(arg);
            case 'r': return ReviewAction::reject();
            case 'd': return ReviewAction::defer();
            case 'm':
                if (!tpl.find(arg)) {
                    out_ << "unknown topic: " << arg << "\n";
                    continue;
                }
                return ReviewAction::merge_into(tpl.find(arg)->name);
            default: out_ << "unrecognized input\n";
            }
        }
    }

private:
    std::istream& in_;
    std::ostream& out_;
};

// ---- induction loop --------------------------------------------------------

struct InductionParams {
    std::size_t sample_size = 10;
    std::uint64_t seed = 0;
    // Rounds over still-unassigned clusters; leftovers are deferred.
    int max_rounds = 3;
    bool include_noise_pool = false;
};

struct CoverageReport {
    std::size_t clusters = 0;
    std::size_t assigned = 0;
    std::size_t noise_terms = 0;
    std::vector<int> deferred;
    std::map<int, std::string> topic_of_cluster;
    std::vector<TopicDecision> decisions;
};

struct InductionResult {
    TopicTemplate final_template;
    CoverageReport coverage;
};

inline nlohmann::json to_json(const CoverageReport& r) {
    nlohmann::json topics = nlohmann::json::object();
    for (const auto& [c, t] : r.topic_of_cluster) topics[std::to_string(c)] = t;
    return {{"clusters", r.clusters},
            {"assigned", r.assigned},
            {"deferred", r.deferred},
            {"noise_terms", r.noise_terms},
            {"topic_of_cluster", topics}};
}

// Walks unassigned clusters: sample, ask the model, record existing-topic
// decisions, send proposals and unparseable replies to the reviewer.
// Rejected clusters are retried in the next round against the updated
// template.
inline InductionResult run_induction_loop(const ClusterAssignment& clusters,
                                          const std::unordered_map<std::string, std::string>& text_of,
                                          TopicTemplate tpl, Gateway& gateway, Reviewer& reviewer,
                                          const InductionParams& params = {}) {
    InductionResult result;
    auto& cov = result.coverage;
    cov.clusters = clusters.cluster_count();
    cov.noise_terms = clusters.noise_count();
    std::vector<int> pending;
    for (int c = 0; c < static_cast<int>(cov.clusters); ++c) pending.push_back(c);
    if (params.include_noise_pool && cov.noise_terms > 0) pending.push_back(kNoise);

    for (int round = 0; round < std::max(1, params.max_rounds) && !pending.empty(); ++round) {
        std::vector<int> retry;
        for (int c : pending) {
            auto ids = sample_cluster(clusters, c, params.sample_size, params.seed + static_cast<std::uint64_t>(round));
            std::vector<std::string> texts;
            for (const auto& id : ids) {
                auto it = text_of.find(id);
                texts.push_back(it == text_of.end() ? id : it->second);
            }
            auto d = assign_topic(texts, tpl, gateway);
            d.cluster = c;
            d.sample_ids = ids;
            cov.decisions.push_back(d);
            if (d.kind == DecisionKind::Existing) {
                cov.topic_of_cluster[c] = d.topic;
                continue;
            }
            auto action = reviewer.review(d, tpl, texts);
            switch (action.kind) {
            case ReviewAction::Kind::Accept:
                tpl = review_decision(tpl, d, action, reviewer.name());
                cov.topic_of_cluster[c] = tpl.topics().back().name;
                break;
            case ReviewAction::Kind::MergeInto:
                tpl = review_decision(tpl, d, action, reviewer.name());
                cov.topic_of_cluster[c] = tpl.find(action.target)->name;
                break;
            case ReviewAction::Kind::Reject:
                tpl = review_decision(tpl, d, action, reviewer.name());
                retry.push_back(c);
                break;
            case ReviewAction::Kind::Defer:
                cov.deferred.push_back(c);
                break;
            }
        }
        pending = std::move(retry);
    }
    for (int c : pending) cov.deferred.push_back(c);
    std::sort(cov.deferred.begin(), cov.deferred.end());
    for (const auto& [c, _] : cov.topic_of_cluster)
        if (c != kNoise) ++cov.assigned;
    result.final_template = std::move(tpl);
    return result;
}

} // namespace termscope
