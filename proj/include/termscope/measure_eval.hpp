#pragma once

// Classifier metrics, corpus statistics, annotation splits and plot data.

#include "termscope/corpus_store.hpp"
#include "termscope/llm_gateway.hpp"
#include "termscope/taxonomy.hpp"
#include "termscope/term_classifier.hpp"
#include "termscope/util/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace termscope {

class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---- metrics ---------------------------------------------------------------

struct EvalMetrics {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double fpr = 0, tpr = 0, precision = 0, f1 = 0, auc_single_point = 0;
};

inline double safe_ratio(double num, double den) { return den == 0 ? 0.0 : num / den; }

inline EvalMetrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
    EvalMetrics m{tp, fp, tn, fn};
    m.fpr = safe_ratio(static_cast<double>(fp), static_cast<double>(fp + tn));
    m.tpr = safe_ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
    m.precision = safe_ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
    m.f1 = safe_ratio(2.0 * m.precision * m.tpr, m.precision + m.tpr);
    m.auc_single_point = (m.tpr + (1.0 - m.fpr)) / 2.0;
    return m;
}

inline EvalMetrics compute_metrics(const std::map<std::string, bool>& predictions, const std::map<std::string, bool>& gold) {
    if (predictions.size() != gold.size()) throw EvalError("prediction and gold key sets differ in size");
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (const auto& [id, g] : gold) {
        auto it = predictions.find(id);
        if (it == predictions.end()) throw EvalError("no prediction for " + id);
        if (it->second && g) ++tp;
        else if (it->second && !g) ++fp;
        else if (!it->second && g) ++fn;
        else ++tn;
    }
    return metrics_from_counts(tp, fp, tn, fn);
}

inline nlohmann::json to_json(const EvalMetrics& m) {
    return {{"tp", m.tp},   {"fp", m.fp},   {"tn", m.tn},         {"fn", m.fn},
            {"fpr", m.fpr}, {"tpr", m.tpr}, {"precision", m.precision}, {"f1", m.f1},
            {"auc_single_point", m.auc_single_point}};
}

// Labels that count as the negative class when reading prediction files.
inline bool is_positive_label(std::string_view label) {
    auto k = text::label_key(label);
    return !(k == "negative" || k == "benign" || k == "b" || k == "0" || k == "false" || k == "non financial" ||
             k == "n");
}

// A JSON object {id: label} or JSONL lines {"term_id", "label"}.
inline std::map<std::string, bool> load_binary_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw EvalError("cannot open label file: " + path);
    std::string content((std::istreambuf_iterator<char>(in)), {});
    std::map<std::string, bool> out;
    auto add = [&](const std::string& id, const nlohmann::json& v) {
        bool pos = v.is_boolean() ? v.get<bool>() : is_positive_label(v.get<std::string>());
        if (!out.emplace(id, pos).second) throw EvalError("duplicate id in " + path + ": " + id);
    };
    auto whole = nlohmann::json::parse(content, nullptr, false);
    if (!whole.is_discarded() && whole.is_object() && !whole.contains("term_id")) {
        for (auto it = whole.begin(); it != whole.end(); ++it) add(it.key(), it.value());
        return out;
    }
    for (auto& line : text::split(content, '\n')) {
        if (text::trim(line).empty()) continue;
        auto j = nlohmann::json::parse(line);
        add(j.at("term_id").get<std::string>(), j.at("label"));
    }
    return out;
}

// ---- corpus statistics -----------------------------------------------------

struct CdfPoint {
    double x = 0;
    double f = 0;
    friend bool operator==(const CdfPoint&, const CdfPoint&) = default;
};

// Empirical CDF: one point per distinct value.
inline std::vector<CdfPoint> empirical_cdf(std::vector<double> values) {
    std::vector<CdfPoint> out;
    if (values.empty()) return out;
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        if (i + 1 == values.size() || values[i + 1] != values[i])
            out.push_back({values[i], static_cast<double>(i + 1) / n});
    return out;
}

struct RankBucket {
    int lo = 0; // inclusive
    int hi = 0; // inclusive
    std::map<Category, std::size_t> counts;
    friend bool operator==(const RankBucket&, const RankBucket&) = default;
};

inline constexpr int kRankBucketWidth = 20000;
inline constexpr int kRankMax = 100000;

inline std::vector<RankBucket> empty_rank_buckets(int width = kRankBucketWidth, int max_rank = kRankMax) {
    std::vector<RankBucket> out;
    for (int lo = 1; lo <= max_rank; lo += width) {
        RankBucket b{lo, std::min(max_rank, lo + width - 1), {}};
        for (auto c : {Category::PurchaseAndBilling, Category::PostPurchase, Category::TerminationAndAccountRecovery,
                       Category::Legal, Category::Others})
            b.counts[c] = 0;
        out.push_back(std::move(b));
    }
    return out;
}

// Index of the bucket holding rank, or -1 outside [1, max_rank].
inline int rank_bucket_index(int rank, int width = kRankBucketWidth, int max_rank = kRankMax) {
    if (rank < 1 || rank > max_rank) return -1;
    return (rank - 1) / width;
}

struct CorpusStats {
    CorpusManifest manifest;
    std::map<Category, std::size_t> category_counts;
    std::size_t total_unfavorable = 0;
    std::size_t needs_review = 0;
    std::size_t websites_with_tc = 0;
    std::size_t websites_with_unfavorable = 0;
    double unfavorable_site_ratio = 0;
    std::vector<CdfPoint> cdf_terms_per_site;
    std::vector<CdfPoint> cdf_unfavorable_per_site;
    std::vector<RankBucket> rank_bucket_histogram;

    friend bool operator==(const CorpusStats&, const CorpusStats&) = default;
};

struct CorpusSnapshot {
    std::vector<WebsiteRecord> websites;
    std::vector<TermRecord> terms;
    std::vector<TermLabel> labels;
};

inline CorpusSnapshot snapshot(const CorpusStore& store) { return {store.websites(), store.terms(), store.labels()}; }

// Pure over the snapshot; record order does not matter. needs_review terms
// are counted separately and excluded from every other figure.
inline CorpusStats compute_corpus_stats(const CorpusSnapshot& snap, const Taxonomy& taxonomy = default_taxonomy()) {
    CorpusStats s;
    for (auto c : {Category::PurchaseAndBilling, Category::PostPurchase, Category::TerminationAndAccountRecovery,
                   Category::Legal, Category::Others})
        s.category_counts[c] = 0;
    s.rank_bucket_histogram = empty_rank_buckets();

    std::map<std::string, const WebsiteRecord*> site;
    for (const auto& w : snap.websites) {
        site[w.url] = &w;
        auto& c = s.manifest.per_source[w.source];
        ++c.queried;
        if (w.shopping_verdict == ShoppingVerdict::Shopping) {
            ++c.shopping;
            if (w.language == "en") ++c.english;
        }
        if (!w.term_page_urls.empty()) ++c.with_tc;
    }
    std::map<std::string, std::string> unfavorable_label;
    for (const auto& l : snap.labels)
        if (l.stage == Stage::Unfavorable) unfavorable_label[l.term_id] = l.label;

    std::map<std::string, std::size_t> terms_per_site, unfav_per_site;
    for (const auto& t : snap.terms) {
        auto w = site.find(t.website_url);
        if (w == site.end()) continue;
        ++s.manifest.per_source[w->second->source].term_count;
        ++terms_per_site[t.website_url];
        auto l = unfavorable_label.find(t.id);
        if (l == unfavorable_label.end()) continue;
        if (l->second == kNeedsReview) {
            ++s.needs_review;
            continue;
        }
        auto cat = label_category(taxonomy, l->second);
        if (!cat) continue;
        ++s.category_counts[*cat];
        ++s.total_unfavorable;
        ++unfav_per_site[t.website_url];
        if (w->second->rank) {
            auto b = rank_bucket_index(*w->second->rank);
            if (b >= 0) ++s.rank_bucket_histogram[static_cast<std::size_t>(b)].counts[*cat];
        }
    }
    // Pass-1 needs_review terms are excluded as well.
    for (const auto& l : snap.labels)
        if (l.stage == Stage::Financial && l.label == kNeedsReview) ++s.needs_review;

    std::vector<double> tc_counts, unfav_counts;
    for (const auto& w : snap.websites) {
        if (unfav_per_site[w.url] > 0) ++s.websites_with_unfavorable;
        if (w.term_page_urls.empty()) continue;
        ++s.websites_with_tc;
        tc_counts.push_back(static_cast<double>(terms_per_site[w.url]));
        unfav_counts.push_back(static_cast<double>(unfav_per_site[w.url]));
    }
    s.unfavorable_site_ratio = safe_ratio(static_cast<double>(s.websites_with_unfavorable), static_cast<double>(s.websites_with_tc));
    s.cdf_terms_per_site = empirical_cdf(tc_counts);
    s.cdf_unfavorable_per_site = empirical_cdf(unfav_counts);
    return s;
}

inline CorpusStats compute_corpus_stats(const CorpusStore& store, const Taxonomy& taxonomy = default_taxonomy()) {
    return compute_corpus_stats(snapshot(store), taxonomy);
}

inline std::string format_percent(double ratio) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", ratio * 100.0);
    return buf;
}

inline nlohmann::json to_json(const CorpusStats& s) {
    nlohmann::json cats = nlohmann::json::object();
    for (const auto& [c, n] : s.category_counts) cats[std::string(to_string(c))] = n;
    auto cdf = [](const std::vector<CdfPoint>& pts) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& p : pts) a.push_back({p.x, p.f});
        return a;
    };
    nlohmann::json buckets = nlohmann::json::array();
    for (const auto& b : s.rank_bucket_histogram) {
        nlohmann::json counts = nlohmann::json::object();
        for (const auto& [c, n] : b.counts) counts[std::string(to_string(c))] = n;
        buckets.push_back({{"lo", b.lo}, {"hi", b.hi}, {"counts", counts}});
    }
    auto m = to_json(s.manifest);
    return {{"per_source", m["per_source"]},
            {"category_counts", cats},
            {"total_unfavorable", s.total_unfavorable},
            {"needs_review", s.needs_review},
            {"websites_with_tc", s.websites_with_tc},
            {"websites_with_unfavorable", s.websites_with_unfavorable},
            {"unfavorable_site_ratio", s.unfavorable_site_ratio},
            {"unfavorable_site_percent", format_percent(s.unfavorable_site_ratio)},
            {"cdf_terms_per_site", cdf(s.cdf_terms_per_site)},
            {"cdf_unfavorable_per_site", cdf(s.cdf_unfavorable_per_site)},
            {"rank_bucket_histogram", buckets}};
}

// ---- plot data -------------------------------------------------------------

inline std::string cdf_csv(const std::vector<CdfPoint>& pts) {
    std::string out = "x,F\n";
    char buf[64];
    for (const auto& p : pts) {
        std::snprintf(buf, sizeof buf, "%.15g,%.15g\n", p.x, p.f);
        out += buf;
    }
    return out;
}

inline std::string rank_bucket_csv(const std::vector<RankBucket>& buckets) {
    std::string out = "rank_lo,rank_hi";
    const Category order[] = {Category::PurchaseAndBilling, Category::PostPurchase, Category::TerminationAndAccountRecovery,
                              Category::Legal, Category::Others};
    for (auto c : order) out += "," + std::string(to_string(c));
    out += "\n";
    for (const auto& b : buckets) {
        out += std::to_string(b.lo) + "," + std::to_string(b.hi);
        for (auto c : order) {
            auto it = b.counts.find(c);
            out += "," + std::to_string(it == b.counts.end() ? 0 : it->second);
        }
        out += "\n";
    }
    return out;
}

// Writes cdf_terms_per_site.csv, cdf_unfavorable_per_site.csv and
// rank_buckets.csv; returns the paths.
inline std::vector<std::filesystem::path> plot_series(const CorpusStats& s, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::pair<std::string, std::string>> files = {
        {"cdf_terms_per_site.csv", cdf_csv(s.cdf_terms_per_site)},
        {"cdf_unfavorable_per_site.csv", cdf_csv(s.cdf_unfavorable_per_site)},
        {"rank_buckets.csv", rank_bucket_csv(s.rank_bucket_histogram)},
    };
    std::vector<std::filesystem::path> out;
    for (const auto& [name, body] : files) {
        auto p = dir / name;
        std::ofstream f(p, std::ios::trunc);
        f << body;
        if (!f) throw EvalError("cannot write " + p.string());
        out.push_back(p);
    }
    return out;
}

// ---- annotation split ------------------------------------------------------

struct AnnotatedTerm {
    std::string term_id;
    std::string text;
    std::string label; // taxonomy type name or "benign"
    friend bool operator==(const AnnotatedTerm&, const AnnotatedTerm&) = default;
};

struct AnnotationSplit {
    std::vector<AnnotatedTerm> fine_tuning;
    std::vector<AnnotatedTerm> validation;
    std::map<std::string, std::size_t> fine_tuning_counts;
    std::map<std::string, std::size_t> validation_counts;
    double ratio = 0.5;
    std::uint64_t seed = 0;
};

// Stratum of a gold label: its category name, or "benign".
inline std::string split_stratum(const Taxonomy& taxonomy, std::string_view label) {
    if (label == kBenign || label == "b") return std::string(kBenign);
    if (label == kOthersLabel) return std::string(to_string(Category::Others));
    if (const auto* t = taxonomy.find(label)) return std::string(to_string(t->category));
    throw EvalError("label outside the taxonomy: " + std::string(label));
}

// Stratified by category. The fine-tuning set gets floor(ratio * n) items;
// each stratum gets floor(ratio * size) plus one of the leftover slots by
// largest remainder (ties go to the stratum listed first).
inline AnnotationSplit make_split(const std::vector<AnnotatedTerm>& items, double ratio, std::uint64_t seed,
                                  const Taxonomy& taxonomy = default_taxonomy()) {
    if (items.empty()) throw EvalError("cannot split an empty set");
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw EvalError("split ratio must be in [0, 1]");
    std::map<std::string, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].label == kNeedsReview) throw EvalError("unlabeled term in split input: " + items[i].term_id);
        strata[split_stratum(taxonomy, items[i].label)].push_back(i);
    }
    const auto total = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(items.size()) + 1e-9));
    struct Quota {
        std::string key;
        std::size_t take;
        double remainder;
    };
    std::vector<Quota> quotas;
    std::size_t assigned = 0;
    for (const auto& [key, idx] : strata) {
        double exact = ratio * static_cast<double>(idx.size());
        auto base = static_cast<std::size_t>(std::floor(exact + 1e-9));
        quotas.push_back({key, base, exact - static_cast<double>(base)});
        assigned += base;
    }
    std::vector<std::size_t> order(quotas.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return quotas[a].remainder > quotas[b].remainder; });
    for (std::size_t k = 0; assigned < total && k < order.size(); ++k, ++assigned) ++quotas[order[k]].take;

    AnnotationSplit split;
    split.ratio = ratio;
    split.seed = seed;
    SeededRng rng(seed);
    std::vector<bool> in_ft(items.size(), false);
    for (const auto& q : quotas) {
        auto idx = strata[q.key];
        rng.shuffle(idx);
        for (std::size_t k = 0; k < q.take && k < idx.size(); ++k) in_ft[idx[k]] = true;
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
        auto stratum = split_stratum(taxonomy, items[i].label);
        if (in_ft[i]) {
            split.fine_tuning.push_back(items[i]);
            ++split.fine_tuning_counts[stratum];
        } else {
            split.validation.push_back(items[i]);
            ++split.validation_counts[stratum];
        }
    }
    return split;
}

inline nlohmann::json to_json(const AnnotatedTerm& t) { return {{"term_id", t.term_id}, {"text", t.text}, {"label", t.label}}; }

inline nlohmann::json to_json(const AnnotationSplit& s) {
    nlohmann::json ft = nlohmann::json::array(), val = nlohmann::json::array();
    for (const auto& t : s.fine_tuning) ft.push_back(to_json(t));
    for (const auto& t : s.validation) val.push_back(to_json(t));
    return {{"ratio", s.ratio},
            {"seed", s.seed},
            {"fine_tuning", ft},
            {"validation", val},
            {"fine_tuning_counts", s.fine_tuning_counts},
            {"validation_counts", s.validation_counts}};
}

inline AnnotationSplit annotation_split_from_json(const nlohmann::json& j) {
    AnnotationSplit s;
    s.ratio = j.value("ratio", 0.5);
    s.seed = j.value("seed", std::uint64_t{0});
    auto read = [](const nlohmann::json& a) {
        std::vector<AnnotatedTerm> out;
        for (const auto& t : a)
            out.push_back({t.at("term_id").get<std::string>(), t.at("text").get<std::string>(), t.at("label").get<std::string>()});
        return out;
    };
    s.fine_tuning = read(j.at("fine_tuning"));
    s.validation = read(j.at("validation"));
    s.fine_tuning_counts = j.value("fine_tuning_counts", std::map<std::string, std::size_t>{});
    s.validation_counts = j.value("validation_counts", std::map<std::string, std::size_t>{});
    return s;
}

// JSONL annotated terms: {"term_id", "text", "label"}.
inline std::vector<AnnotatedTerm> load_annotated_terms(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw EvalError("cannot open annotation file: " + path);
    std::vector<AnnotatedTerm> out;
    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        auto j = nlohmann::json::parse(line);
        out.push_back({j.at("term_id").get<std::string>(), j.at("text").get<std::string>(), j.at("label").get<std::string>()});
    }
    return out;
}

// ---- fine-tuning export ----------------------------------------------------

// Expected reply for a gold label under the taxonomy prompt contract.
inline std::string expected_reply(const Taxonomy& taxonomy, std::string_view label) {
    if (label == kBenign || label == "b") return "b";
    if (const auto* t = taxonomy.find(label)) return t->name;
    throw EvalError("gold label is neither benign nor a taxonomy type: " + std::string(label));
}

inline std::vector<nlohmann::json> finetune_records(const std::vector<AnnotatedTerm>& terms, const PromptTemplate& tpl,
                                                    const Taxonomy& taxonomy = default_taxonomy()) {
    std::vector<nlohmann::json> out;
    for (const auto& t : terms) out.push_back({{"input", render_prompt(tpl, t.text)}, {"expected", expected_reply(taxonomy, t.label)}});
    return out;
}

// One JSON object per line with "input" and "expected".
inline std::size_t export_finetune_file(const std::vector<AnnotatedTerm>& terms, const PromptTemplate& tpl,
                                        const std::filesystem::path& out_path, const Taxonomy& taxonomy = default_taxonomy()) {
    auto records = finetune_records(terms, tpl, taxonomy);
    if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
    std::ofstream out(out_path, std::ios::trunc);
    for (const auto& r : records) out << r.dump() << "\n";
    if (!out) throw EvalError("cannot write " + out_path.string());
    return records.size();
}

} // namespace termscope
