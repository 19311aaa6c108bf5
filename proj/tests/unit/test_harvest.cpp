#include "support.hpp"
#include "oracles/generators.hpp"

#include <gtest/gtest.h>

using namespace termscope;
using testing_support::fast_fetch;

// ---- fetcher -------------------------------------------------------------

TEST(Fetcher, StatusesAreMapped) {
    auto t = std::make_shared<FixtureTransport>();
    t->page("https://a.example/", "<p>home</p>")
        .page("https://a.example/err", "boom", 500)
        .page("https://a.example/big", std::string(100, 'x'))
        .unreachable("https://down.example/");
    auto opts = fast_fetch();
    opts.max_body = 50;
    WebFetcher f(t, opts);
    EXPECT_EQ(f.fetch("https://a.example/").fetch_status, FetchStatus::Ok);
    EXPECT_EQ(f.fetch("https://a.example/missing").fetch_status, FetchStatus::NotFound);
    EXPECT_EQ(f.fetch("https://a.example/err").fetch_status, FetchStatus::HttpError);
    EXPECT_EQ(f.fetch("https://a.example/big").fetch_status, FetchStatus::TooLarge);
    EXPECT_EQ(f.fetch("https://down.example/").fetch_status, FetchStatus::NetworkError);
    EXPECT_EQ(f.fetch("not a url at all").fetch_status, FetchStatus::InvalidUrl);
}

TEST(Fetcher, EachUrlIsFetchedOncePerInstance) {
    auto t = std::make_shared<FixtureTransport>();
    t->page("https://a.example/", "<p>home</p>");
    WebFetcher f(t, fast_fetch());
    f.fetch("https://a.example/");
    f.fetch("https://A.example:443/#x");
    EXPECT_EQ(t->requests("https://a.example/"), 1u);
}

TEST(Fetcher, RedirectLimitIsTen) {
    auto chain = [](int hops) {
        auto t = std::make_shared<FixtureTransport>();
        for (int i = 0; i < hops; ++i)
            t->redirect("https://r.example/" + std::to_string(i), "/" + std::to_string(i + 1));
        t->page("https://r.example/" + std::to_string(hops), "<p>end</p>");
        return t;
    };
    WebFetcher ok(chain(10), fast_fetch());
    auto e = ok.fetch("https://r.example/0");
    EXPECT_EQ(e.fetch_status, FetchStatus::Ok);
    EXPECT_EQ(e.redirects, 10);
    EXPECT_EQ(e.final_url, "https://r.example/10");
    WebFetcher bad(chain(11), fast_fetch());
    EXPECT_EQ(bad.fetch("https://r.example/0").fetch_status, FetchStatus::TooManyRedirects);
}

TEST(Fetcher, HonorsRobots) {
    auto t = std::make_shared<FixtureTransport>();
    t->page("https://a.example/robots.txt", "User-agent: *\nDisallow: /private\nAllow: /private/terms\n")
        .page("https://a.example/private/x", "<p>x</p>")
        .page("https://a.example/private/terms", "<p>t</p>");
    WebFetcher f(t, fast_fetch());
    EXPECT_EQ(f.fetch("https://a.example/private/x").fetch_status, FetchStatus::RobotsDisallowed);
    EXPECT_EQ(f.fetch("https://a.example/private/terms").fetch_status, FetchStatus::Ok);
    auto opts = fast_fetch();
    opts.honor_robots = false;
    WebFetcher g(t, opts);
    EXPECT_EQ(g.fetch("https://a.example/private/x").fetch_status, FetchStatus::Ok);
}

TEST(Robots, GroupSelectionAndWildcards) {
    auto r = RobotsRules::parse("User-agent: other\nDisallow: /\n\nUser-agent: termscope\nDisallow: /*.pdf$\n", "termscope/1.0");
    EXPECT_TRUE(r.allowed("/terms"));
    EXPECT_FALSE(r.allowed("/doc/terms.pdf"));
    EXPECT_TRUE(r.allowed("/doc/terms.pdf?x"));
    auto star = RobotsRules::parse("User-agent: *\nDisallow: /cart\n", "termscope/1.0");
    EXPECT_FALSE(star.allowed("/cart/checkout"));
    EXPECT_TRUE(RobotsRules{}.allowed("/anything"));
}

TEST(Fetcher, PerHostDelaySpacesRequests) {
    auto t = std::make_shared<FixtureTransport>();
    t->page("https://a.example/1", "x").page("https://a.example/2", "y");
    auto opts = fast_fetch();
    opts.per_host_delay = std::chrono::milliseconds(120);
    opts.honor_robots = false;
    WebFetcher f(t, opts);
    auto start = std::chrono::steady_clock::now();
    f.fetch("https://a.example/1");
    f.fetch("https://a.example/2");
    EXPECT_GE(std::chrono::steady_clock::now() - start, std::chrono::milliseconds(115));
}

// ---- link patterns -------------------------------------------------------

TEST(LinkPatterns, VocabularySizes) {
    const auto& p = default_link_patterns();
    EXPECT_EQ(p.positive_patterns.size(), 29u);
    EXPECT_EQ(p.negative_patterns.size(), 7u);
    EXPECT_NO_THROW(LinkMatcher{p});
}

TEST(LinkPatterns, Examples) {
    LinkMatcher m;
    EXPECT_TRUE(m.accepts("Terms of Service", "/legal"));
    EXPECT_TRUE(m.accepts("Returns Policy", "/help"));
    EXPECT_TRUE(m.accepts("Legal", "/pages/terms-of-sale"));
    EXPECT_TRUE(m.accepts("TERMS & CONDITIONS", ""));
    EXPECT_FALSE(m.accepts("Privacy Policy", "/privacy"));
    EXPECT_FALSE(m.accepts("Terms and Privacy Policy", "/terms"));
    EXPECT_FALSE(m.accepts("Terms", "/cookie-policy"));
    EXPECT_FALSE(m.accepts("About us", "/about"));
}

TEST(LinkPatterns, NegativeMatchAlwaysExcludesProperty) {
    LinkMatcher m;
    gen::Source g(5);
    std::vector<std::string> pieces = {"terms", "privacy policy", "returns policy", "cookie policy", "warranty",
                                       "about", "shipping policy", "prohibited items", "faq", "conditions of use"};
    for (int i = 0; i < 1000; ++i) {
        std::string text = g.pick(pieces) + " " + g.pick(pieces);
        std::string path = "/" + g.pick(pieces);
        bool neg = m.negative(text) || m.negative(path);
        bool pos = m.positive(text) || m.positive(path);
        EXPECT_EQ(m.accepts(text, path), !neg && pos) << text << " | " << path;
    }
}

TEST(LinkPatterns, OverrideFileParsing) {
    auto set = parse_pattern_file("[positive]\nfoo.*bar\n\n[negative]\nbaz\n");
    ASSERT_EQ(set.positive_patterns.size(), 1u);
    EXPECT_EQ(set.negative_patterns[0], "baz");
    EXPECT_THROW(parse_pattern_file("orphan\n"), PatternError);
    EXPECT_THROW(LinkMatcher(parse_pattern_file("[positive]\n(unclosed\n")), PatternError);
}

TEST(Discovery, ResolvesDeduplicatesAndSkipsNonHttp) {
    auto links = discover_term_links(R"(<a href="/terms">Terms</a><a href="terms#top">Terms again</a>
<a href="mailto:x@y.example">Terms by mail</a><a href="#terms">Terms anchor</a><a href="/privacy">Privacy Policy</a>
<a href="/p/Return%20Policy">Help</a>)",
                                     std::string("https://shop.example/help/"));
    ASSERT_EQ(links.size(), 3u);
    EXPECT_EQ(links[0], "https://shop.example/terms");
    EXPECT_EQ(links[1], "https://shop.example/help/terms");
    EXPECT_EQ(links[2], "https://shop.example/p/Return%20Policy");
}

// ---- snowball crawl ------------------------------------------------------

namespace {
std::shared_ptr<FixtureTransport> crawl_site() {
    auto t = std::make_shared<FixtureTransport>();
    t->page("https://shop.example/", R"(<a href="/terms">Terms of Use</a><a href="https://help.shop.example/shipping-policy">Shipping</a>
<a href="https://other.example/terms">Partner terms</a>)")
        .page("https://shop.example/terms", R"(<p>Main terms.</p><a href="/returns-policy">Returns</a><a href="/terms">Terms</a>)")
        .page("https://help.shop.example/shipping-policy", "<p>Shipping.</p>")
        .page("https://shop.example/returns-policy", R"(<p>Returns.</p><a href="/warranty">Warranty</a>)")
        .page("https://shop.example/warranty", "<p>Warranty.</p>")
        .page("https://other.example/terms", "<p>Other.</p>");
    return t;
}
} // namespace

TEST(Snowball, DepthLimitDomainFenceAndCycles) {
    auto t = crawl_site();
    WebFetcher f(t, fast_fetch());
    auto docs = snowball_crawl("https://shop.example/", f, LinkMatcher{}, 2);
    std::vector<std::pair<std::string, int>> got;
    for (const auto& d : docs) got.emplace_back(d.document.page_url, d.depth);
    std::vector<std::pair<std::string, int>> want = {{"https://shop.example/terms", 1},
                                                     {"https://help.shop.example/shipping-policy", 1},
                                                     {"https://shop.example/returns-policy", 2}};
    EXPECT_EQ(got, want);
    EXPECT_EQ(t->requests("https://other.example/terms"), 0u);
    EXPECT_EQ(t->requests("https://shop.example/terms"), 1u);
    EXPECT_EQ(docs[0].document.raw_body_hash, sha256_hex(docs[0].body));

    WebFetcher f3(crawl_site(), fast_fetch());
    EXPECT_EQ(snowball_crawl("https://shop.example/", f3, LinkMatcher{}, 3).size(), 4u);
    WebFetcher f1(crawl_site(), fast_fetch());
    EXPECT_EQ(snowball_crawl("https://shop.example/", f1, LinkMatcher{}, 1).size(), 2u);
}

TEST(Snowball, UnreachableHomepageYieldsNothing) {
    auto t = std::make_shared<FixtureTransport>();
    t->unreachable("https://down.example/");
    WebFetcher f(t, fast_fetch());
    EXPECT_TRUE(snowball_crawl("https://down.example/", f, LinkMatcher{}).empty());
}

// ---- website classification ----------------------------------------------

TEST(WebsiteClassification, VerdictsFromReplies) {
    auto model = std::make_shared<MockModel>("m1");
    model->reply_containing(PromptName::WebsiteCls, "blog.example", "Non-Shopping.")
        .reply_containing(PromptName::WebsiteCls, "odd.example", "perhaps")
        .default_reply(PromptName::WebsiteCls, "shopping");
    Gateway gw(model);
    PageEvidence e;
    e.url = e.final_url = "https://shop.example/";
    e.fetch_status = FetchStatus::Ok;
    e.html_body = "<p>Add to cart</p>";
    auto c = classify_website(e, ClassificationMode::UrlHtml, gw);
    EXPECT_EQ(c.verdict, ShoppingVerdict::Shopping);
    EXPECT_EQ(c.model_id, "m1");
    EXPECT_NE(model->log().back().payload.find("Add to cart"), std::string::npos);

    e.url = e.final_url = "https://blog.example/";
    EXPECT_EQ(classify_website(e, ClassificationMode::UrlOnly, gw).verdict, ShoppingVerdict::NonShopping);
    EXPECT_EQ(model->log().back().payload, "URL: https://blog.example/");

    e.url = e.final_url = "https://odd.example/";
    auto u = classify_website(e, ClassificationMode::UrlHtml, gw);
    EXPECT_EQ(u.verdict, ShoppingVerdict::Unknown);
    EXPECT_FALSE(u.diagnostic.empty());
    EXPECT_THROW(classify_website(e, ClassificationMode::UrlScreenshot, gw), MissingScreenshot);
}

// ---- extractor -----------------------------------------------------------

TEST(Extractor, DropsBoilerplateAndMergesShortFragments) {
    auto terms = extract_terms(R"(<html><head><title>T</title></head><body><nav>Home | Shop</nav>
<h1>Terms</h1><p>All orders are subject to availability and acceptance.</p>
<p>Refunds are issued within 14 days of receiving the returned goods.</p><footer>Copyright</footer>
<p>Thanks!</p></body></html>)",
                               "https://a.example/", "https://a.example/terms");
    ASSERT_EQ(terms.size(), 2u);
    EXPECT_EQ(terms[0].text, "Terms All orders are subject to availability and acceptance.");
    EXPECT_EQ(terms[1].text, "Refunds are issued within 14 days of receiving the returned goods. Thanks!");
    EXPECT_EQ(terms[0].position_index, 0);
    EXPECT_EQ(terms[1].position_index, 1);
}

TEST(Extractor, EmptyAndTinyInputs) {
    EXPECT_TRUE(extract_terms("", "https://a.example/", "https://a.example/t").empty());
    auto one = extract_terms("<p>Short.</p>", "https://a.example/", "https://a.example/t");
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0].text, "Short.");
}

TEST(Extractor, EscapedMarkupIsDefused) {
    auto terms = extract_terms("<p>Use of &lt;b&gt;bold&lt;/b&gt; tags in reviews is not permitted here.</p>",
                               "https://a.example/", "https://a.example/t");
    ASSERT_EQ(terms.size(), 1u);
    EXPECT_TRUE(is_normalized_term_text(terms[0].text));
}

TEST(Extractor, OutputPropertiesOnRandomDocuments) {
    gen::Source g(17);
    const std::vector<std::string> tags = {"p", "div", "li", "h2", "section", "td"};
    for (int doc = 0; doc < 200; ++doc) {
        std::string markup = "<body>";
        int blocks = static_cast<int>(g.below(12));
        for (int b = 0; b < blocks; ++b) {
            auto tag = g.pick(tags);
            markup += "<" + tag + ">" + g.sentence(1 + g.below(14)) + (g.coin(0.2) ? "<br>" + g.word() : "") + "</" + tag + ">";
            if (g.coin(0.1)) markup += "<script>var a = '<p>x</p>';</script>";
        }
        markup += "</body>";
        auto frags = block_fragments(markup);
        auto terms = extract_terms(markup, "https://a.example/", "https://a.example/t");
        std::string joined_frags = text::join(frags, " ");
        std::vector<std::string> texts;
        for (std::size_t i = 0; i < terms.size(); ++i) {
            EXPECT_TRUE(is_normalized_term_text(terms[i].text));
            EXPECT_EQ(terms[i].position_index, static_cast<int>(i));
            if (terms.size() > 1) {
                EXPECT_GE(extract_detail::char_count(terms[i].text), kMinFragmentChars);
            }
            texts.push_back(terms[i].text);
        }
        EXPECT_EQ(text::join(texts, " "), joined_frags);
    }
}

TEST(Extractor, Deterministic) {
    std::string markup = "<p>Orders ship within two business days of payment.</p><p>Fees apply.</p>";
    EXPECT_EQ(extract_terms(markup, "https://a.example/", "u"), extract_terms(markup, "https://a.example/", "u"));
}
