#pragma once

// Two-pass term classification: pass 1 against the financial template,
// pass 2 against the unfavorable taxonomy for financial-positive terms.

#include "termscope/corpus_store.hpp"
#include "termscope/llm_gateway.hpp"
#include "termscope/taxonomy.hpp"
#include "termscope/util/parallel.hpp"

#include <atomic>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace termscope {

class StageFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PassPrecondition : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

inline Category map_type_to_category(const Taxonomy& taxonomy, std::string_view type_name) {
    return taxonomy.category_of(type_name);
}

inline Category map_type_to_category(std::string_view type_name) {
    return map_type_to_category(default_taxonomy(), type_name);
}

inline CriteriaProfile criteria_profile(const Taxonomy& taxonomy, std::string_view type_name) {
    return taxonomy.criteria_of(type_name);
}

inline CriteriaProfile criteria_profile(std::string_view type_name) {
    return criteria_profile(default_taxonomy(), type_name);
}

// A stored pass-1 label is positive when it names a category that feeds the
// unfavorable pass.
inline bool is_financial_positive(const FinancialTemplate& tpl, std::string_view label) {
    if (label == kNonFinancial || label == kNeedsReview) return false;
    const auto* c = tpl.find(label);
    return c && c->feeds_unfavorable_pass;
}

// Unfavorable when the pass-2 label is a taxonomy type or Others.
inline bool is_unfavorable_label(const Taxonomy& taxonomy, std::string_view label) {
    if (label == kOthersLabel) return true;
    return taxonomy.find(label) != nullptr;
}

// Category of a stored pass-2 label; nullopt for benign and needs_review.
inline std::optional<Category> label_category(const Taxonomy& taxonomy, std::string_view label) {
    if (label == kOthersLabel) return Category::Others;
    if (const auto* t = taxonomy.find(label)) return t->category;
    return std::nullopt;
}

struct PassOptions {
    std::size_t workers = 8;
    // Re-query terms whose stored label is needs_review.
    bool retry_needs_review = false;
};

struct PassReport {
    Stage stage = Stage::Financial;
    std::size_t in_scope = 0;
    std::size_t skipped = 0;
    std::size_t labeled = 0;
    std::size_t needs_review = 0;
    std::size_t model_calls = 0;
    std::size_t cache_hits = 0;
    std::vector<std::string> queried_ids;
};

namespace classifier_detail {

inline bool up_to_date(const std::optional<TermLabel>& existing, const std::string& model_id, int prompt_version,
                       bool retry_needs_review) {
    if (!existing) return false;
    if (existing->model_id != model_id || existing->prompt_version != prompt_version) return false;
    return !(retry_needs_review && existing->label == kNeedsReview);
}

} // namespace classifier_detail

// Labels every term of the slice in scope for the stage. Pass 2 scope is
// the slice's financial-positive terms; the slice must be fully labeled by
// pass 1 first. Terms already labeled by the same model and prompt version
// are skipped. Unparseable replies become needs_review; transport failures
// abort the pass with StageFailure.
inline PassReport run_pass(CorpusStore& store, const TermQuery& slice, Stage stage, Gateway& gateway,
                           const PassOptions& options = {}) {
    PassReport report;
    report.stage = stage;
    const auto& financial = gateway.financial_template();
    const auto& taxonomy = gateway.taxonomy();
    auto terms = store.terms(slice);

    std::vector<TermRecord> scope;
    std::set<std::string> positive_ids;
    if (stage == Stage::Unfavorable) {
        for (const auto& t : terms) {
            auto l = store.label(t.id, Stage::Financial);
            if (!l) throw PassPrecondition("financial pass incomplete: term " + t.id + " has no financial label");
            if (is_financial_positive(financial, l->label)) {
                positive_ids.insert(t.id);
                scope.push_back(t);
            }
        }
    } else {
        scope = std::move(terms);
    }
    report.in_scope = scope.size();

    const PromptName prompt = stage == Stage::Financial ? PromptName::FinancialTemplate : PromptName::UnfavorableTaxonomy;
    const int version = gateway.prompt(prompt).version;
    const auto model_id = gateway.model_id();
    ReplyParser parser;
    if (stage == Stage::Financial)
        parser = [&financial](std::string_view raw) { return parse_financial_reply(financial, raw); };
    else
        parser = [&taxonomy](std::string_view raw) { return parse_taxonomy_reply(taxonomy, raw); };

    std::vector<const TermRecord*> todo;
    for (const auto& t : scope) {
        if (classifier_detail::up_to_date(store.label(t.id, stage), model_id, version, options.retry_needs_review))
            ++report.skipped;
        else
            todo.push_back(&t);
    }

    std::mutex mu;
    std::atomic<std::size_t> calls{0}, hits{0}, review{0};
    try {
        parallel_for(todo.size(), options.workers, [&](std::size_t i) {
            const auto& term = *todo[i];
            if (stage == Stage::Unfavorable && !positive_ids.count(term.id))
                throw std::logic_error("pass containment violated for term " + term.id);
            auto reply = gateway.query(prompt, term.text, parser);
            if (reply.from_cache) hits.fetch_add(1);
            else calls.fetch_add(static_cast<std::size_t>(reply.attempts));
            TermLabel label{term.id, stage, reply.label ? *reply.label : std::string(kNeedsReview), reply.model_id,
                            reply.prompt_version, reply.cache_key};
            if (!reply.label) review.fetch_add(1);
            store.put_label(label);
            std::lock_guard lock(mu);
            report.queried_ids.push_back(term.id);
        });
    } catch (const TransportError& e) {
        throw StageFailure(std::string(to_string(stage)) + " pass failed: " + e.what());
    }
    std::sort(report.queried_ids.begin(), report.queried_ids.end());
    report.labeled = report.queried_ids.size();
    report.model_calls = calls.load();
    report.cache_hits = hits.load();
    report.needs_review = review.load();
    return report;
}

} // namespace termscope
