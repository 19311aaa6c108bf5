#pragma once

// Hand-computed statistics for tests/fixtures/e2e12, worked out from the
// fixture pages and the scripted replies in mock_llm.jsonl.
//
//  15 listed sites: dead15 is unreachable, blog13 is not a shop, laden14 is
//  German. The remaining 12 English shops all expose a terms page; together
//  they hold 26 terms (two sites with 1, eight with 2, two with 4: shop01
//  links a separate returns page, shop02 has four paragraphs).
//  Unfavorable labels: 2 PostPurchase, 1 PurchaseAndBilling, 2 Legal,
//  1 TerminationAndAccountRecovery, 1 Others, plus 1 needs_review.
//  Five sites carry at least one (three with 1, two with 2).
//
//  Model calls on a fresh corpus count distinct prompts, since identical
//  paragraphs on different sites share a cache entry:
//   14 reachable homepages,
//   12 distinct paragraph texts in pass 1,
//   9 distinct pass-1 positives in pass 2 (the glossary text is not sent),
//   plus 2 retries for the unparseable reply to the shipping-insurance term.
//  13 term records reach pass 2.

#include <termscope/termscope.hpp>

namespace oracle {

inline constexpr std::size_t kE2eFirstRunModelCalls = 14 + 12 + 9 + 2;
inline constexpr std::size_t kE2ePassTwoTerms = 13;

inline termscope::CorpusStats e2e12_expected_stats() {
    using termscope::Category;
    termscope::CorpusStats s;
    s.manifest.per_source[termscope::Source::Tranco] = {15, 13, 12, 12, 26};
    s.category_counts = {{Category::PurchaseAndBilling, 1},
                         {Category::PostPurchase, 2},
                         {Category::TerminationAndAccountRecovery, 1},
                         {Category::Legal, 2},
                         {Category::Others, 1}};
    s.total_unfavorable = 7;
    s.needs_review = 1;
    s.websites_with_tc = 12;
    s.websites_with_unfavorable = 5;
    s.unfavorable_site_ratio = 5.0 / 12.0;
    s.cdf_terms_per_site = {{1, 2.0 / 12}, {2, 10.0 / 12}, {4, 1.0}};
    s.cdf_unfavorable_per_site = {{0, 7.0 / 12}, {1, 10.0 / 12}, {2, 1.0}};
    s.rank_bucket_histogram = termscope::empty_rank_buckets();
    auto& b = s.rank_bucket_histogram;
    b[0].counts[Category::PostPurchase] = 1;
    b[0].counts[Category::PurchaseAndBilling] = 1;
    b[0].counts[Category::Legal] = 1;
    b[1].counts[Category::TerminationAndAccountRecovery] = 1;
    b[2].counts[Category::PostPurchase] = 1;
    b[2].counts[Category::Others] = 1;
    b[4].counts[Category::Legal] = 1;
    return s;
}

inline termscope::Config e2e12_config(const std::string& fixture_root, const std::string& corpus) {
    termscope::Config c;
    c.set("corpus", corpus);
    c.set("fetch.per_host_delay_ms", "0");
    c.set("fetch.fixtures", fixture_root + "/e2e12/sites");
    c.set("model.endpoint", "mock:" + fixture_root + "/e2e12/mock_llm.jsonl");
    c.set("sites", fixture_root + "/e2e12/sites.csv");
    return c;
}

} // namespace oracle
