#include "support.hpp"
#include "oracles/e2e12_expected.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>

using namespace termscope;
using testing_support::TempDir;

namespace {

std::string fixtures() { return TERMSCOPE_FIXTURE_DIR; }

int run_cli(const std::string& args, std::string* out = nullptr) {
    TempDir tmp;
    auto cmd = std::string(TERMSCOPE_CLI) + " " + args + " > " + (tmp / "out.txt").string() + " 2>&1";
    int rc = std::system(cmd.c_str());
    if (out) *out = testing_support::read_file(tmp / "out.txt");
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

} // namespace

// ---- config ----------------------------------------------------------------

TEST(Config, ParseAndTypedAccess) {
    auto c = Config::parse("# comment\nseed = 7\n\nfetch.honor_robots = no\ncluster.eps=0.2\nserve.cors_origins = a, b ,\n");
    EXPECT_EQ(c.integer("seed"), 7);
    EXPECT_FALSE(c.boolean("fetch.honor_robots"));
    EXPECT_DOUBLE_EQ(c.real("cluster.eps"), 0.2);
    EXPECT_EQ(c.list("serve.cors_origins"), (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(c.str("model.id"), "gpt-4o");
}

TEST(Config, Errors) {
    EXPECT_THROW(Config::parse("no equals sign"), ConfigError);
    EXPECT_THROW(Config::parse("bogus.key = 1"), ConfigError);
    auto c = Config::parse("seed = 7x\nfetch.honor_robots = maybe");
    EXPECT_THROW(c.integer("seed"), ConfigError);
    EXPECT_THROW(c.boolean("fetch.honor_robots"), ConfigError);
    EXPECT_THROW(Config::load("/nonexistent/termscope.conf"), ConfigError);
}

TEST(Config, EnvironmentOverridesFile) {
    EXPECT_EQ(Config::env_name("model.max_in_flight"), "TERMSCOPE_MODEL_MAX_IN_FLIGHT");
    auto c = Config::parse("model.id = from-file\nworkers = 3");
    ::setenv("TERMSCOPE_MODEL_ID", "from-env", 1);
    c.apply_env();
    ::unsetenv("TERMSCOPE_MODEL_ID");
    EXPECT_EQ(c.str("model.id"), "from-env");
    EXPECT_EQ(c.integer("workers"), 3);
}

TEST(SiteList, TrancoAndCustomLines) {
    auto v = parse_site_list("# header\n12,Shop.Example\nhttps://other.example/path?q=1,flos\nhttp://x.example,custom,55\n12,shop.example\n");
    ASSERT_EQ(v.size(), 3u);
    EXPECT_EQ(v[0].url, "https://shop.example/");
    EXPECT_EQ(v[0].source, Source::Tranco);
    EXPECT_EQ(v[0].rank, 12);
    EXPECT_EQ(v[1].url, "https://other.example/");
    EXPECT_FALSE(v[1].rank);
    EXPECT_EQ(v[2].rank, 55);
    EXPECT_TRUE(parse_site_list("\n# only comments\n").empty());
    EXPECT_THROW(parse_site_list("12"), ConfigError);
    EXPECT_THROW(parse_site_list("https://a.example,nowhere"), ConfigError);
    EXPECT_THROW(load_site_list("/nonexistent/sites.csv"), ConfigError);
}

TEST(Runtime, ModelOnlyRequiredWhenAsked) {
    TempDir dir;
    Config c;
    c.set("corpus", (dir / "c").string());
    EXPECT_NO_THROW(make_runtime(c, false));
    EXPECT_THROW(make_runtime(c, true), ConfigError);
    c.set("fetch.fixtures", (dir / "missing").string());
    EXPECT_THROW(make_runtime(c, false), ConfigError);
}

// ---- end to end --------------------------------------------------------------

TEST(EndToEnd, TwelveSiteFixtureMatchesHandComputedStats) {
    TempDir dir;
    auto config = oracle::e2e12_config(fixtures(), (dir / "corpus").string());
    auto sites = load_site_list(config.str("sites"));
    ASSERT_EQ(sites.size(), 15u);
    {
        auto rt = make_runtime(config, true);
        auto m = run_measurement(rt, sites, dir / "stats.json", dir / "plots");
        EXPECT_EQ(m.stats, oracle::e2e12_expected_stats()) << to_json(m.stats).dump() << "\n" << to_json(oracle::e2e12_expected_stats()).dump();
        EXPECT_EQ(format_percent(m.stats.unfavorable_site_ratio), "41.67%");
        EXPECT_EQ(rt.gateway->model_calls(), oracle::kE2eFirstRunModelCalls);
        EXPECT_TRUE(m.manifest.monotone());
        auto j = nlohmann::json::parse(testing_support::read_file(dir / "stats.json"));
        EXPECT_EQ(j["unfavorable_site_percent"], "41.67%");
        EXPECT_TRUE(std::filesystem::exists(dir / "plots/rank_buckets.csv"));
    }
    auto rt = make_runtime(config, true);
    auto again = run_measurement(rt, sites);
    EXPECT_EQ(rt.gateway->model_calls(), 0u);
    EXPECT_EQ(again.stats, oracle::e2e12_expected_stats());
}

TEST(EndToEnd, TopicStagesNeedFinancialLabels) {
    TempDir dir;
    auto config = oracle::e2e12_config(fixtures(), (dir / "corpus").string());
    auto rt = make_runtime(config, true);
    stage_harvest(rt, load_site_list(config.str("sites")));
    stage_classify_sites(rt);
    stage_discover(rt);
    stage_extract(rt);
    EXPECT_THROW(topic_terms(*rt.store, default_financial_template()), MissingLabels);
    stage_classify(rt, Stage::Financial);
    auto terms = topic_terms(*rt.store, default_financial_template());
    EXPECT_EQ(terms.size(), oracle::kE2ePassTwoTerms);
}

// ---- command line --------------------------------------------------------------

TEST(Cli, ExitCodes) {
    TempDir dir;
    auto corpus = "--corpus " + (dir / "c").string();
    EXPECT_EQ(run_cli("--help"), 0);
    EXPECT_EQ(run_cli("no-such-command"), 2);
    EXPECT_EQ(run_cli("classify"), 2);
    EXPECT_EQ(run_cli(corpus + " --set bogus=1 measure"), 2);
    EXPECT_EQ(run_cli(corpus + " classify --stage financial"), 2); // no model endpoint
    EXPECT_EQ(run_cli(corpus + " harvest"), 2);                      // no site list
    EXPECT_EQ(run_cli(corpus + " --set embedding.endpoint=hash:16 cluster"), 0);
    EXPECT_EQ(run_cli(corpus + " measure"), 0);
}

TEST(Cli, ClusterWithoutLabelsIsStageFailure) {
    TempDir dir;
    auto c = oracle::e2e12_config(fixtures(), (dir / "c").string());
    std::string args = "--corpus " + c.str("corpus") + " --set fetch.fixtures=" + c.str("fetch.fixtures") +
                       " --set fetch.per_host_delay_ms=0 --set model.endpoint=" + c.str("model.endpoint");
    ASSERT_EQ(run_cli(args + " harvest --sites " + c.str("sites")), 0);
    ASSERT_EQ(run_cli(args + " classify-sites"), 0);
    ASSERT_EQ(run_cli(args + " discover-tc"), 0);
    ASSERT_EQ(run_cli(args + " extract"), 0);
    std::string out;
    EXPECT_EQ(run_cli(args + " --set embedding.endpoint=hash:16 cluster", &out), 3) << out;
}

TEST(Cli, EvalSplitExport) {
    TempDir dir;
    testing_support::write_file(dir / "pred.json", R"({"a": true, "b": true, "c": false})");
    testing_support::write_file(dir / "gold.json", R"({"a": true, "b": false, "c": false})");
    std::string out;
    ASSERT_EQ(run_cli("eval --pred " + (dir / "pred.json").string() + " --gold " + (dir / "gold.json").string(), &out), 0);
    EXPECT_NE(out.find("\"tp\": 1"), std::string::npos) << out;
    testing_support::write_file(dir / "gold2.json", R"({"a": true})");
    EXPECT_EQ(run_cli("eval --pred " + (dir / "pred.json").string() + " --gold " + (dir / "gold2.json").string()), 3);

    std::string lines;
    for (int i = 0; i < 10; ++i)
        lines += nlohmann::json{{"term_id", "t" + std::to_string(i)}, {"text", "Term " + std::to_string(i)},
                                {"label", i % 2 ? "benign" : "Restocking Fee"}}.dump() + "\n";
    testing_support::write_file(dir / "ann.jsonl", lines);
    ASSERT_EQ(run_cli("split --input " + (dir / "ann.jsonl").string() + " --out " + (dir / "split.json").string(), &out), 0);
    EXPECT_NE(out.find("fine_tuning 5, validation 5"), std::string::npos) << out;
    ASSERT_EQ(run_cli("export-finetune --split " + (dir / "split.json").string() + " --out " + (dir / "ft.jsonl").string()), 0);
    EXPECT_EQ(text::split(text::trim(testing_support::read_file(dir / "ft.jsonl")), '\n').size(), 5u);
}
