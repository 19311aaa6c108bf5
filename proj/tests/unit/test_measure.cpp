#include "support.hpp"
#include "oracles/confusion_search.hpp"
#include "oracles/generators.hpp"

#include <gtest/gtest.h>

using namespace termscope;
using testing_support::TempDir;

// ---- metrics -------------------------------------------------------------

TEST(Metrics, ReferenceMatrix) {
    auto m = metrics_from_counts(116, 3, 116, 10);
    EXPECT_NEAR(100 * m.tpr, 92.06, 0.01);
    EXPECT_NEAR(100 * m.f1, 94.69, 0.01);
    EXPECT_NEAR(100 * m.fpr, 2.52, 0.01);
    EXPECT_NEAR(100 * m.precision, 97.48, 0.01);
    EXPECT_DOUBLE_EQ(m.auc_single_point, (m.tpr + 1 - m.fpr) / 2);
}

TEST(Metrics, ZeroDenominatorsAreZero) {
    auto m = metrics_from_counts(0, 0, 0, 0);
    EXPECT_EQ(m.tpr, 0.0);
    EXPECT_EQ(m.fpr, 0.0);
    EXPECT_EQ(m.f1, 0.0);
}

TEST(Metrics, PropertiesOverRandomMatrices) {
    gen::Source g(99);
    for (int i = 0; i < 1000; ++i) {
        std::size_t tp = g.below(300), fp = g.below(300), tn = g.below(300), fn = g.below(300);
        auto m = metrics_from_counts(tp, fp, tn, fn);
        for (double v : {m.tpr, m.fpr, m.precision, m.f1, m.auc_single_point}) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        double f1_direct = (2 * tp + fp + fn) == 0 ? 0.0 : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
        EXPECT_NEAR(m.f1, f1_direct, 1e-12);
        if (m.precision > 0 && m.tpr > 0) {
            EXPECT_LE(m.f1, std::max(m.precision, m.tpr) + 1e-12);
            EXPECT_GE(m.f1, std::min(m.precision, m.tpr) - 1e-12);
        }
        if (fp + tn > 0) {
            auto tnr = static_cast<double>(tn) / static_cast<double>(fp + tn);
            EXPECT_NEAR(m.fpr + tnr, 1.0, 1e-12);
        }
    }
}

TEST(Metrics, ComputeFromLabelMaps) {
    std::map<std::string, bool> pred{{"a", true}, {"b", true}, {"c", false}, {"d", false}};
    std::map<std::string, bool> gold{{"a", true}, {"b", false}, {"c", true}, {"d", false}};
    auto m = compute_metrics(pred, gold);
    EXPECT_EQ(m.tp, 1u);
    EXPECT_EQ(m.fp, 1u);
    EXPECT_EQ(m.fn, 1u);
    EXPECT_EQ(m.tn, 1u);
    pred.erase("d");
    EXPECT_THROW(compute_metrics(pred, gold), EvalError);
    pred["e"] = true;
    EXPECT_THROW(compute_metrics(pred, gold), EvalError);
}

TEST(Metrics, LoadLabelFiles) {
    TempDir dir;
    testing_support::write_file(dir / "obj.json", R"({"a": "Restocking Fee", "b": "benign", "c": true})");
    testing_support::write_file(dir / "lines.jsonl", "{\"term_id\":\"a\",\"label\":\"b\"}\n\n{\"term_id\":\"b\",\"label\":\"malicious\"}\n");
    testing_support::write_file(dir / "dup.jsonl", "{\"term_id\":\"a\",\"label\":\"b\"}\n{\"term_id\":\"a\",\"label\":\"m\"}\n");
    auto o = load_binary_labels((dir / "obj.json").string());
    EXPECT_EQ(o, (std::map<std::string, bool>{{"a", true}, {"b", false}, {"c", true}}));
    auto l = load_binary_labels((dir / "lines.jsonl").string());
    EXPECT_EQ(l, (std::map<std::string, bool>{{"a", false}, {"b", true}}));
    EXPECT_THROW(load_binary_labels((dir / "dup.jsonl").string()), EvalError);
    EXPECT_THROW(load_binary_labels((dir / "none.json").string()), EvalError);
}

TEST(Metrics, AgreesWithConfusionSearchOracle) {
    // Every matrix within tolerance of the reference rates, scored both by
    // the oracle arithmetic and by the library.
    int found = 0;
    for (int tp = 0; tp <= 126; ++tp)
        for (int fp = 0; fp <= 119; ++fp) {
            double tpr = oracle::pct(tp, 126);
            double prec = oracle::pct(tp, tp + fp);
            double f1 = (prec + tpr) == 0 ? 0 : 2 * prec * tpr / (prec + tpr);
            if (std::abs(tpr - 92.1) > 0.5 || std::abs(f1 - 94.6) > 1.0) continue;
            auto m = metrics_from_counts(static_cast<std::size_t>(tp), static_cast<std::size_t>(fp),
                                         static_cast<std::size_t>(119 - fp), static_cast<std::size_t>(126 - tp));
            EXPECT_NEAR(100 * m.tpr, tpr, 1e-9);
            EXPECT_NEAR(100 * m.f1, f1, 1e-9);
            if (tp == 116 && fp == 3) ++found;
        }
    EXPECT_EQ(found, 1);
    EXPECT_TRUE(oracle::fp_for_fpr(119, 2.3).empty());
}

// ---- corpus stats --------------------------------------------------------

TEST(EmpiricalCdf, Example) {
    auto c = empirical_cdf({5, 2, 1, 2});
    EXPECT_EQ(c, (std::vector<CdfPoint>{{1, 0.25}, {2, 0.75}, {5, 1.0}}));
    EXPECT_TRUE(empirical_cdf({}).empty());
}

TEST(EmpiricalCdf, MonotoneEndingAtOneProperty) {
    gen::Source g(8);
    for (int i = 0; i < 200; ++i) {
        std::vector<double> v;
        for (std::size_t k = 0, n = 1 + g.below(40); k < n; ++k) v.push_back(static_cast<double>(g.below(10)));
        auto c = empirical_cdf(v);
        for (std::size_t k = 1; k < c.size(); ++k) {
            EXPECT_LT(c[k - 1].x, c[k].x);
            EXPECT_LT(c[k - 1].f, c[k].f);
        }
        EXPECT_DOUBLE_EQ(c.back().f, 1.0);
    }
}

TEST(RankBuckets, Boundaries) {
    EXPECT_EQ(rank_bucket_index(1), 0);
    EXPECT_EQ(rank_bucket_index(20000), 0);
    EXPECT_EQ(rank_bucket_index(20001), 1);
    EXPECT_EQ(rank_bucket_index(100000), 4);
    EXPECT_EQ(rank_bucket_index(100001), -1);
    EXPECT_EQ(rank_bucket_index(0), -1);
    auto b = empty_rank_buckets();
    ASSERT_EQ(b.size(), 5u);
    EXPECT_EQ(b[4].lo, 80001);
    EXPECT_EQ(b[4].hi, 100000);
}

namespace {

// n sites with T&C pages; the first `with_unfavorable` carry one
// unfavorable-labelled term each.
CorpusSnapshot synthetic(std::size_t n, std::size_t with_unfavorable) {
    CorpusSnapshot s;
    for (std::size_t i = 0; i < n; ++i) {
        auto w = testing_support::shop_site("https://s" + std::to_string(i) + ".example/", Source::Tranco,
                                            static_cast<int>(1 + i % 100000));
        w.term_page_urls.insert(w.url + "terms");
        s.websites.push_back(w);
        auto t = make_term(w.url, w.url + "terms", 0, "Term text for site " + std::to_string(i));
        s.terms.push_back(t);
        s.labels.push_back({t.id, Stage::Financial, "Return and Refund Policy", "m", 1, ""});
        s.labels.push_back({t.id, Stage::Unfavorable, i < with_unfavorable ? "Restocking Fee" : "benign", "m", 1, ""});
    }
    return s;
}

} // namespace

TEST(CorpusStats, SiteRatioFormatting) {
    auto s = compute_corpus_stats(synthetic(8251, 3471));
    EXPECT_EQ(s.websites_with_tc, 8251u);
    EXPECT_EQ(s.websites_with_unfavorable, 3471u);
    EXPECT_DOUBLE_EQ(s.unfavorable_site_ratio, 3471.0 / 8251.0);
    // The reference figure is truncated to two decimals; the formatter rounds.
    EXPECT_EQ(std::floor(s.unfavorable_site_ratio * 10000) / 100, 42.06);
    EXPECT_EQ(format_percent(s.unfavorable_site_ratio), "42.07%");
    EXPECT_EQ(format_percent(5.0 / 12.0), "41.67%");
    EXPECT_EQ(s.category_counts.at(Category::PostPurchase), 3471u);
}

TEST(CorpusStats, NeedsReviewExcludedAndOthersCounted) {
    auto snap = synthetic(4, 0);
    snap.labels[1].label = "needs_review";
    snap.labels[3].label = "Others";
    snap.labels[5].label = "Forced Waiver of Class Action Rights";
    snap.labels[6].label = "needs_review";
    auto s = compute_corpus_stats(snap);
    EXPECT_EQ(s.needs_review, 2u);
    EXPECT_EQ(s.total_unfavorable, 2u);
    EXPECT_EQ(s.category_counts.at(Category::Others), 1u);
    EXPECT_EQ(s.category_counts.at(Category::Legal), 1u);
    EXPECT_EQ(s.websites_with_unfavorable, 2u);
    EXPECT_EQ(s.rank_bucket_histogram[0].counts.at(Category::Others), 1u);
}

TEST(CorpusStats, IndependentOfRecordOrderProperty) {
    gen::Source g(12);
    auto snap = synthetic(60, 25);
    auto base = compute_corpus_stats(snap);
    for (int i = 0; i < 20; ++i) {
        std::shuffle(snap.websites.begin(), snap.websites.end(), g.engine());
        std::shuffle(snap.terms.begin(), snap.terms.end(), g.engine());
        std::shuffle(snap.labels.begin(), snap.labels.end(), g.engine());
        EXPECT_EQ(compute_corpus_stats(snap), base);
    }
}

TEST(CorpusStats, PlotSeriesFiles) {
    TempDir dir;
    auto s = compute_corpus_stats(synthetic(4, 1));
    auto files = plot_series(s, dir.path() / "plots");
    ASSERT_EQ(files.size(), 3u);
    EXPECT_EQ(testing_support::read_file(files[0]), "x,F\n1,1\n");
    EXPECT_EQ(testing_support::read_file(files[1]), "x,F\n0,0.75\n1,1\n");
    auto buckets = testing_support::read_file(files[2]);
    EXPECT_EQ(buckets.substr(0, buckets.find('\n')), "rank_lo,rank_hi,PurchaseAndBilling,PostPurchase,TerminationAndAccountRecovery,Legal,Others");
    EXPECT_NE(buckets.find("1,20000,0,1,0,0,0\n"), std::string::npos);
}

// ---- split and export ----------------------------------------------------

namespace {

std::vector<AnnotatedTerm> annotated(std::size_t n, std::uint64_t seed) {
    gen::Source g(seed);
    std::vector<std::string> labels = {"benign", "benign", "Restocking Fee", "Immediate Automatic Subscription",
                                       "Account Recovery Fee", "Forced Waiver of Class Action Rights", "Others"};
    std::vector<AnnotatedTerm> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({"t" + std::to_string(i), "Text " + std::to_string(i), g.pick(labels)});
    return out;
}

} // namespace

TEST(Split, HalvesWithStratifiedQuotas) {
    auto items = annotated(489, 1);
    auto s = make_split(items, 0.5, 7);
    EXPECT_EQ(s.fine_tuning.size(), 244u);
    EXPECT_EQ(s.validation.size(), 245u);
    std::map<std::string, std::size_t> total;
    for (const auto& t : items) ++total[split_stratum(default_taxonomy(), t.label)];
    for (const auto& [k, n] : total) {
        auto ft = s.fine_tuning_counts[k];
        EXPECT_TRUE(ft == n / 2 || ft == (n + 1) / 2) << k;
        EXPECT_EQ(ft + s.validation_counts[k], n);
    }
}

TEST(Split, DeterministicPerSeedAndDisjoint) {
    auto items = annotated(100, 2);
    auto a = make_split(items, 0.5, 3), b = make_split(items, 0.5, 3), c = make_split(items, 0.5, 4);
    EXPECT_EQ(a.fine_tuning, b.fine_tuning);
    EXPECT_NE(a.fine_tuning, c.fine_tuning);
    std::set<std::string> ids;
    for (const auto& t : a.fine_tuning) ids.insert(t.term_id);
    for (const auto& t : a.validation) EXPECT_FALSE(ids.count(t.term_id));
    auto back = annotation_split_from_json(to_json(a));
    EXPECT_EQ(back.fine_tuning, a.fine_tuning);
    EXPECT_EQ(back.validation, a.validation);
}

TEST(Split, RejectsBadInput) {
    EXPECT_THROW(make_split({}, 0.5, 1), EvalError);
    EXPECT_THROW(make_split(annotated(4, 1), 1.5, 1), EvalError);
    EXPECT_THROW(make_split({{"a", "x", "needs_review"}}, 0.5, 1), EvalError);
    EXPECT_THROW(make_split({{"a", "x", "Mystery Fee"}}, 0.5, 1), EvalError);
}

TEST(Export, RecordsUsePromptContract) {
    TempDir dir;
    auto tpl = unfavorable_taxonomy_prompt(default_taxonomy());
    std::vector<AnnotatedTerm> terms = {{"a", "Restocking fee of 15%.", "restocking fee"}, {"b", "Hello there.", "benign"}};
    auto n = export_finetune_file(terms, tpl, dir / "out/ft.jsonl");
    EXPECT_EQ(n, 2u);
    auto lines = text::split(testing_support::read_file(dir / "out/ft.jsonl"), '\n');
    auto first = nlohmann::json::parse(lines[0]);
    EXPECT_EQ(first["expected"], "Restocking Fee");
    EXPECT_EQ(first["input"], render_prompt(tpl, "Restocking fee of 15%."));
    EXPECT_EQ(nlohmann::json::parse(lines[1])["expected"], "b");
    EXPECT_THROW(finetune_records({{"c", "x", "Others"}}, tpl), EvalError);
    EXPECT_THROW(finetune_records({{"c", " ", "benign"}}, tpl), EmptyPayload);
}
