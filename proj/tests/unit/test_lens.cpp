#include "support.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <thread>

using namespace termscope;
using testing_support::fast_fetch;
using testing_support::fixture;

namespace {

const std::string kCheckout = "https://fithabit.example/checkout";
const std::string kBlog = "https://fithabit.example/blog/how-to-train";

struct Lens {
    std::shared_ptr<FixtureTransport> transport = FixtureTransport::from_directory(fixture("fithabit/sites"));
    std::shared_ptr<MockModel> model;
    std::shared_ptr<Gateway> gateway;
    std::shared_ptr<VirtualTime> time = std::make_shared<VirtualTime>();
    std::unique_ptr<LensService> service;

    explicit Lens(LensConfig cfg = {}) {
        model = std::shared_ptr<MockModel>(MockModel::from_file(fixture("fithabit/mock_llm.jsonl").string()));
        gateway = std::make_shared<Gateway>(model);
        auto t = transport;
        service = std::make_unique<LensService>(
            gateway, [t] { return std::make_shared<WebFetcher>(t, fast_fetch()); }, cfg, time);
    }
};

PageEvidence page_of(const std::string& url, const std::string& body) {
    PageEvidence e;
    e.url = e.final_url = url;
    e.fetch_status = FetchStatus::Ok;
    e.html_body = body;
    return e;
}

} // namespace

// ---- payment detection ---------------------------------------------------

TEST(PaymentHeuristic, CheckoutFormIsPayment) {
    auto body = testing_support::read_file(fixture("fithabit/sites/fithabit.example/checkout"));
    auto v = detect_payment_heuristic(body);
    EXPECT_TRUE(v.is_payment_page);
    EXPECT_EQ(v.evidence, (std::vector<std::string>{"card_number_field", "cvv_or_expiry_field", "keyword:checkout", "total_amount"}));
}

TEST(PaymentHeuristic, SingleSignalIsNotEnough) {
    EXPECT_FALSE(detect_payment_heuristic("<p>Proceed to checkout when ready.</p>").is_payment_page);
    EXPECT_FALSE(detect_payment_heuristic("<p>Read our blog about training.</p>").is_payment_page);
    EXPECT_TRUE(detect_payment_heuristic("<p>Payment</p><p>Order total: $12.00</p>").is_payment_page);
}

TEST(PaymentModel, UsesGatewayAndNeedsEvidence) {
    auto model = std::make_shared<MockModel>("m");
    model->reply_containing(PromptName::PaymentPageCls, "Pay here", "Payment").default_reply(PromptName::PaymentPageCls, "non-payment");
    Gateway gw(model);
    EXPECT_TRUE(detect_payment_page(page_of("https://a.example/", "<p>Pay here</p>"), PaymentMode::Model, &gw).is_payment_page);
    EXPECT_FALSE(detect_payment_page(page_of("https://a.example/", "<p>Blog</p>"), PaymentMode::Model, &gw).is_payment_page);
    PageEvidence empty;
    empty.url = "https://a.example/";
    EXPECT_THROW(detect_payment_page(empty, PaymentMode::Model, &gw), InsufficientEvidence);
    EXPECT_THROW(detect_payment_page(empty, PaymentMode::Model, nullptr), std::invalid_argument);
}

// ---- alerts --------------------------------------------------------------

TEST(Amounts, ExtractionNormalizesSpacingAndSeparators) {
    EXPECT_EQ(monetary_amounts("pay $1,000.50 or \xE2\x82\xAC 5 plus 8% fee"),
              (std::vector<std::string>{"$1000.50", "\xE2\x82\xAC" "5", "8%"}));
    EXPECT_TRUE(monetary_amounts("no money here").empty());
}

TEST(Alerts, SuppressionRequiresAmountsAndSharedWording) {
    auto page = page_of("https://a.example/pay", "<p>Checkout</p><p>Shipping and handling of your order: $5.00</p><p>Total: $5.00</p>");
    PaymentPageVerdict pay{true, {"keyword:checkout", "total_amount"}, PaymentMode::Heuristic};
    auto t1 = make_term("https://a.example/", "u", 0, "We charge $5.00 for shipping and handling of your order.");
    auto t2 = make_term("https://a.example/", "u", 1, "We charge $7.00 for shipping and handling of your order.");
    auto t3 = make_term("https://a.example/", "u", 2, "A restocking fee of $5.00 applies to all returns.");
    std::vector<FlaggedTerm> flagged = {{t3, "Restocking Fee"}, {t1, "Non-Refundable Additional Fee"}, {t2, "Non-Refundable Additional Fee"}};
    auto alerts = generate_alerts(flagged, pay, page);
    ASSERT_EQ(alerts.size(), 3u);
    EXPECT_EQ(alerts[0].term_id, t3.id);
    EXPECT_FALSE(alerts[0].suppressed);
    EXPECT_TRUE(alerts[1].suppressed);
    EXPECT_EQ(alerts[1].suppression_reason, "displayed_on_payment_page");
    EXPECT_FALSE(alerts[2].suppressed);

    PaymentPageVerdict not_pay;
    for (const auto& a : generate_alerts(flagged, not_pay, page)) EXPECT_FALSE(a.suppressed);
}

TEST(Alerts, OrderedByCategoryAndExcerptBounded) {
    auto long_text = std::string(600, 'a');
    auto t1 = make_term("https://a.example/", "u", 0, long_text);
    auto t2 = make_term("https://a.example/", "u", 1, "Automatic renewal applies.");
    auto alerts = generate_alerts({{t1, "Forced Waiver of Class Action Rights"}, {t2, "Immediate Automatic Subscription"}}, {}, {});
    EXPECT_EQ(alerts[0].category, Category::PurchaseAndBilling);
    EXPECT_EQ(alerts[1].category, Category::Legal);
    EXPECT_EQ(alerts[1].excerpt.size(), kExcerptChars);
    EXPECT_THROW(generate_alerts({{t2, "Made Up Type"}}, {}, {}), TaxonomyError);
}

// ---- service -------------------------------------------------------------

TEST(LensService, FitHabitCheckoutSuppressesDisplayedFee) {
    Lens lens;
    auto r = lens.service->analyze(kCheckout);
    EXPECT_EQ(r.status, "ok");
    EXPECT_TRUE(r.payment.is_payment_page);
    ASSERT_EQ(r.alerts.size(), 2u);
    EXPECT_EQ(r.alerts[0].type_name, "Immediate Automatic Subscription");
    EXPECT_FALSE(r.alerts[0].suppressed);
    EXPECT_EQ(r.alerts[1].type_name, "Non-Refundable Additional Fee");
    EXPECT_TRUE(r.alerts[1].suppressed);
    EXPECT_EQ(r.alerts[1].source_page_url, "https://fithabit.example/terms-and-conditions");
    EXPECT_EQ(r.counts.at(Category::PurchaseAndBilling), 1u);
    EXPECT_EQ(r.counts.at(Category::PostPurchase), 1u);
    EXPECT_EQ(r.model.model_id, "mock-gpt-4o");
    EXPECT_EQ(r.terms_analyzed, 3u);
    EXPECT_FALSE(check_report(r).has_value());
}

TEST(LensService, FitHabitNonPaymentPageKeepsBothAlerts) {
    Lens lens;
    auto r = lens.service->analyze(kBlog);
    EXPECT_FALSE(r.payment.is_payment_page);
    ASSERT_EQ(r.alerts.size(), 2u);
    for (const auto& a : r.alerts) EXPECT_FALSE(a.suppressed);
    EXPECT_FALSE(check_report(r).has_value());
}

TEST(LensService, SiteAnalysisIsSharedAcrossPagesAndExpires) {
    Lens lens;
    auto first = lens.service->analyze_json(kCheckout);
    auto calls = lens.gateway->model_calls();
    EXPECT_EQ(lens.service->analyze_json(kCheckout), first);
    lens.service->analyze(kBlog);
    EXPECT_EQ(lens.service->site_analyses(), 1u);
    EXPECT_EQ(lens.gateway->model_calls(), calls);
    lens.time->advance(24 * 3600 + 1);
    lens.service->analyze(kBlog);
    EXPECT_EQ(lens.service->site_analyses(), 2u);
}

TEST(LensService, ConcurrentRequestsShareOneAnalysis) {
    Lens lens;
    std::vector<std::thread> threads;
    for (int i = 0; i < 6; ++i)
        threads.emplace_back([&, i] { lens.service->analyze(i % 2 ? kCheckout : kBlog); });
    for (auto& t : threads) t.join();
    EXPECT_EQ(lens.service->site_analyses(), 1u);
}

TEST(LensService, ModelPaymentModeUsesClassifierReply) {
    LensConfig cfg;
    cfg.payment_mode = PaymentMode::Model;
    Lens lens(cfg);
    auto r = lens.service->analyze(kCheckout);
    EXPECT_EQ(r.payment.mode, PaymentMode::Model);
    EXPECT_FALSE(r.payment.is_payment_page);
    for (const auto& a : r.alerts) EXPECT_FALSE(a.suppressed);
}

TEST(LensService, ErrorsAndEmptySites) {
    Lens lens;
    lens.transport->unreachable("https://down.example/");
    lens.transport->page("https://plain.example/", "<p>Welcome. No legal links here.</p>");
    auto down = lens.service->analyze("https://down.example/");
    EXPECT_EQ(down.status, "error");
    EXPECT_NE(down.error.find("network_error"), std::string::npos) << down.error;
    auto plain = lens.service->analyze("https://plain.example/");
    EXPECT_EQ(plain.status, "ok");
    EXPECT_TRUE(plain.no_terms_found);
    EXPECT_TRUE(plain.alerts.empty());
    auto bad = lens.service->analyze("ftp://nope");
    EXPECT_EQ(bad.status, "error");
    EXPECT_NE(bad.error.find("invalid_url"), std::string::npos);
}

TEST(LensService, ReportJsonShape) {
    Lens lens;
    auto j = nlohmann::json::parse(lens.service->analyze_json(kCheckout));
    EXPECT_EQ(j["counts"]["PurchaseAndBilling"], 1);
    EXPECT_EQ(j["counts"]["Legal"], 0);
    EXPECT_EQ(j["alerts"][1]["suppression_reason"], "displayed_on_payment_page");
    EXPECT_TRUE(j["alerts"][0]["suppression_reason"].is_null());
    EXPECT_EQ(j["model"]["unfavorable_prompt_version"], 1000 + default_taxonomy().version());
}

TEST(LensHttp, Routes) {
    Lens lens;
    httplib::Server server;
    install_routes(server, *lens.service, {{"chrome-extension://abc"}});
    int port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client cli("127.0.0.1", port);

    auto health = cli.Get("/v1/health");
    ASSERT_TRUE(health);
    EXPECT_EQ(health->status, 200);
    auto tax = cli.Get("/v1/taxonomy");
    ASSERT_TRUE(tax);
    EXPECT_EQ(nlohmann::json::parse(tax->body), to_json(default_taxonomy()));

    httplib::Headers origin = {{"Origin", "chrome-extension://abc"}};
    auto res = cli.Post("/v1/analyze", origin, R"({"url":")" + kCheckout + R"("})", "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "chrome-extension://abc");
    EXPECT_EQ(res->body, lens.service->analyze_json(kCheckout));

    auto bad = cli.Post("/v1/analyze", "{}", "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 400);

    auto pre_ok = cli.Options("/v1/analyze", origin);
    ASSERT_TRUE(pre_ok);
    EXPECT_EQ(pre_ok->status, 204);
    auto pre_bad = cli.Options("/v1/analyze", {{"Origin", "https://evil.example"}});
    ASSERT_TRUE(pre_bad);
    EXPECT_EQ(pre_bad->status, 403);

    server.stop();
    th.join();
}
