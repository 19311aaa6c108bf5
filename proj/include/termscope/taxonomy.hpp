#pragma once

// The unfavorable financial term taxonomy (22 profiled types in four
// categories plus the legal catch-all) and the 12-category financial term
// template used by the first classification pass.

#include "termscope/util/text.hpp"

#include <json.hpp>

#include <array>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace termscope {

enum class Category { PurchaseAndBilling, PostPurchase, TerminationAndAccountRecovery, Legal, Others };

inline constexpr std::array<Category, 4> kTaxonomyCategories = {
    Category::PurchaseAndBilling, Category::PostPurchase, Category::TerminationAndAccountRecovery,
    Category::Legal};

inline std::string_view to_string(Category c) {
    switch (c) {
    case Category::PurchaseAndBilling: return "PurchaseAndBilling";
    case Category::PostPurchase: return "PostPurchase";
    case Category::TerminationAndAccountRecovery: return "TerminationAndAccountRecovery";
    case Category::Legal: return "Legal";
    case Category::Others: return "Others";
    }
    return "Others";
}

inline std::optional<Category> parse_category(std::string_view s) {
    for (auto c : {Category::PurchaseAndBilling, Category::PostPurchase,
                   Category::TerminationAndAccountRecovery, Category::Legal, Category::Others})
        if (to_string(c) == s) return c;
    return std::nullopt;
}

// Sort rank for report and plot ordering; Others last.
inline int category_order(Category c) { return static_cast<int>(c); }

enum class Likelihood { Always, Sometimes };

inline std::string_view to_string(Likelihood l) { return l == Likelihood::Always ? "always" : "sometimes"; }

// Substantial injury, unavoidable harm, insufficient countervailing benefit.
struct CriteriaProfile {
    Likelihood substantial_injury;
    Likelihood unavoidable_harm;
    Likelihood insufficient_benefit;
    friend bool operator==(const CriteriaProfile&, const CriteriaProfile&) = default;
};

struct TaxonomyType {
    std::string name;
    Category category;
    std::string description;
    std::optional<CriteriaProfile> criteria; // absent only for the catch-all entry
    std::string example;
    bool catch_all = false;
};

class TaxonomyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Taxonomy {
public:
    Taxonomy() = default;
    Taxonomy(int version, std::vector<TaxonomyType> entries) : version_(version), entries_(std::move(entries)) {
        validate();
    }

    int version() const { return version_; }

    // All entries in prompt order, catch-all included.
    const std::vector<TaxonomyType>& entries() const { return entries_; }

    std::size_t profiled_type_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_)
            if (!e.catch_all) ++n;
        return n;
    }

    // Exact match after lowercasing and collapsing whitespace/hyphens.
    const TaxonomyType* find(std::string_view name) const {
        auto key = text::label_key(name);
        for (const auto& e : entries_)
            if (text::label_key(e.name) == key) return &e;
        return nullptr;
    }

    const TaxonomyType& at(std::string_view name) const {
        if (const auto* t = find(name)) return *t;
        throw TaxonomyError("unknown taxonomy type: " + std::string(name));
    }

    Category category_of(std::string_view name) const { return at(name).category; }

    // Throws for unknown names and for the catch-all, which has no profile.
    CriteriaProfile criteria_of(std::string_view name) const {
        const auto& t = at(name);
        if (!t.criteria) throw TaxonomyError("no criteria profile for: " + t.name);
        return *t.criteria;
    }

    std::size_t count_in(Category c) const {
        std::size_t n = 0;
        for (const auto& e : entries_)
            if (e.category == c) ++n;
        return n;
    }

private:
    void validate() const {
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].name.empty()) throw TaxonomyError("taxonomy entry without name");
            if (entries_[i].category == Category::Others)
                throw TaxonomyError("taxonomy entry in Others bucket: " + entries_[i].name);
            if (!entries_[i].catch_all && !entries_[i].criteria)
                throw TaxonomyError("taxonomy type without criteria: " + entries_[i].name);
            for (std::size_t j = 0; j < i; ++j)
                if (text::label_key(entries_[i].name) == text::label_key(entries_[j].name))
                    throw TaxonomyError("duplicate taxonomy type: " + entries_[i].name);
        }
    }

    int version_ = 0;
    std::vector<TaxonomyType> entries_;
};

inline const Taxonomy& default_taxonomy() {
    constexpr auto A = Likelihood::Always;
    constexpr auto S = Likelihood::Sometimes;
    using C = Category;
    static const Taxonomy taxonomy(1, {
        {"Immediate Automatic Subscription", C::PurchaseAndBilling,
         "A paid subscription is added alongside a purchase or promotion without clear consent.",
         CriteriaProfile{A, S, A},
         "Also, as part of the promotion, you will receive a subscription to the FitHabit Fitness App for only $86, "
         "and the subscription will renew monthly up until cancellation."},
        {"Automatic Subscription after Free Trial", C::PurchaseAndBilling,
         "A free trial converts into a paid subscription unless the user cancels in time.",
         CriteriaProfile{A, S, S},
         "After the Promotion period has ended, unless you cancel the service before the end of the free trial "
         "period, you will automatically be subscribed onto the regular paid 1-year plan at the price of $275.40, "
         "which will automatically renew for successive 12-month periods, until cancelled."},
        {"Unilateral Unauthorized Account Upgrades", C::PurchaseAndBilling,
         "The provider may move the user to a more expensive plan without notice.",
         CriteriaProfile{A, A, A},
         "Brevo reserves the right to automatically increase the contacts limit in the User account and upgrade "
         "the User's plan without prior notice."},
        {"Late or Unsuccessful Payment Penalty", C::PurchaseAndBilling,
         "Fees or interest are charged when a payment is late or fails.",
         CriteriaProfile{A, S, S},
         "In addition, if any payment is not received within 30 days after the due date, then we may charge a "
         "late fee of $10 and we may assess interest at the rate of 1.5% of the outstanding balance per month "
         "(18% per year), or the maximum rate permitted by law."},
        {"Overuse Penalty", C::PurchaseAndBilling,
         "Extra charges apply once usage exceeds a limit set by the provider.",
         CriteriaProfile{A, S, S},
         "If the Company establishes limits on the frequency with which you may access the Site, or terminates "
         "your access to or use of the Site, you agree to pay the Company one hundred dollars ($100) for each "
         "message posted in excess of such limits or for each day on which you access the Site in excess of such "
         "limits, whichever is higher."},
        {"Retroactive Application of Price Change", C::PurchaseAndBilling,
         "Price increases may be applied to periods that have already started.",
         CriteriaProfile{A, A, S},
         "When an applicable exchange rate is updated or when a change of price is notified to Brevo by its "
         "suppliers or WhatsApp, Brevo might immediately apply with retroactive effect the new Ratio and price "
         "increase to the User."},
        {"Non-Refundable Subscription Fee", C::PostPurchase,
         "Subscription charges already taken are kept after cancellation.",
         CriteriaProfile{S, S, A},
         "If you or we cancel your subscription, you are not entitled to a refund of any subscription fees that "
         "were already charged for a subscription period that has already begun."},
        {"No Refund For Purchase", C::PostPurchase,
         "Individual purchases are final and cannot be refunded.",
         CriteriaProfile{S, S, S},
         "Unless a refund is required by law, there are No Refund For Purchases for POS terminals and all "
         "transactions are final."},
        {"Strict No Cancellation Policy", C::PostPurchase,
         "Orders cannot be cancelled once processing has begun.",
         CriteriaProfile{S, S, S},
         "As Research and Markets starts processing your order once it is submitted, we operate a strict no "
         "cancellation policy."},
        {"Cancellation Fee or Penalty", C::PostPurchase,
         "Cancelling a booking, service or order incurs a charge.",
         CriteriaProfile{S, S, S},
         "Some Bookings can't be canceled for free, while others can only be canceled for free before a deadline."},
        {"Non-Refundable Additional Fee", C::PostPurchase,
         "Service, handling, administrative or similar surcharges are never refunded.",
         CriteriaProfile{S, S, S},
         "For this service, National Park Reservations charges a 10% non-refundable reservation fee based on the "
         "total dollar amount of reservations made."},
        {"Non-Monetary Refund Alternatives", C::PostPurchase,
         "Refunds are issued as coupons, points or store credit instead of money.",
         CriteriaProfile{S, S, A},
         "Refund Policy: Refunds are not in cash but in the form of a \"coupon\"."},
        {"No Responsibility for Delivery Delays", C::PostPurchase,
         "The seller disclaims liability when delivery is late.",
         CriteriaProfile{S, S, A},
         "We will not be held responsible if there are delays in delivery due to out-of-stock products."},
        {"Customers Responsible for Shipping Issues", C::PostPurchase,
         "The buyer carries customs, surcharge and other non-delay shipping problems.",
         CriteriaProfile{S, S, A},
         "If the parcel is on hold by the Customs department of the shipping country, the customer is liable to "
         "provide all relevant and required documentation on to the authorities. Asim Jofa is not liable to "
         "refund the amount in case of non-clearance of the parcel."},
        {"Customers Pay Return Shipping", C::PostPurchase,
         "The buyer pays the cost of shipping a return.",
         CriteriaProfile{S, S, A},
         "All shipping costs will have to be borne by the customer."},
        {"Restocking Fee", C::PostPurchase,
         "A charge is deducted for restocking a returned item.",
         CriteriaProfile{S, S, A},
         "An 8% restocking fee and shipping fees for both ways will be borne by the buyer if returned without "
         "defects within 30 days from the purchase date or 7 days from delivery date, whichever is later."},
        {"Account Recovery Fee", C::TerminationAndAccountRecovery,
         "Regaining access to a locked or archived account costs money.",
         CriteriaProfile{S, S, S},
         "To recover an archived or locked account, the legitimate creator of the account shall provide "
         "verifiable information about one's identity and will be charged a 10% administrative fee for the "
         "additional work caused by the account recovery process."},
        {"Digital Currency, Reward, Money Seizure on Inactivity", C::TerminationAndAccountRecovery,
         "Balances, points or virtual currency are forfeited after a period of inactivity.",
         CriteriaProfile{S, S, A},
         "Please be noted that if your account is dormant for a period of 12 consecutive calendar months or "
         "longer, ..., any amounts in your account's balance, including any outstanding fees owed to you, shall "
         "be considered as forfeited and shall be fully deducted to Appnext."},
        {"Digital Currency, Reward, Money Seizure on Termination or Account Closure",
         C::TerminationAndAccountRecovery,
         "Balances, points or virtual currency are forfeited when the account or service ends.",
         CriteriaProfile{S, S, S},
         "All Currency and/or Virtual Goods shall be cancelled if Your account is terminated or suspended for any "
         "reason or if We discontinue providing the Games and we will not compensate you for this loss or make "
         "any refund to you."},
        {"Exorbitant Legal Document Request Fee", C::Legal,
         "Requests for legal documents are billed at a high rate.",
         CriteriaProfile{S, S, S},
         "Responding to requests for production of documents, and other matters requiring more than mere "
         "ministerial activities on our part, will incur a fee of two hundred dollars ($200) per hour."},
        {"Forced Waiver of Legal Protections", C::Legal,
         "The customer must give up statutory protections.",
         CriteriaProfile{S, S, S},
         "You hereby waive California Civil Code Section 1542. You hereby waive any similar provision in law, "
         "regulation, or code."},
        {"Forced Waiver of Class Action Rights", C::Legal,
         "The customer must give up the right to join a class action.",
         CriteriaProfile{S, S, S},
         "This agreement includes a class action waiver and an arbitration provision that governs any disputes "
         "between you and Sendinblue."},
        {"Other Legal Unfavorable Financial Term", C::Legal,
         "Any other legal clause that imposes a financial burden or limits recourse.", std::nullopt, "...", true},
    });
    return taxonomy;
}

inline nlohmann::json to_json(const Taxonomy& t) {
    nlohmann::json types = nlohmann::json::array();
    for (const auto& e : t.entries()) {
        nlohmann::json j{{"name", e.name},
                         {"category", to_string(e.category)},
                         {"description", e.description},
                         {"example", e.example}};
        if (e.criteria) {
            j["criteria"] = {{"c1", to_string(e.criteria->substantial_injury)},
                             {"c2", to_string(e.criteria->unavoidable_harm)},
                             {"c3", to_string(e.criteria->insufficient_benefit)}};
        } else {
            j["criteria"] = nullptr;
        }
        if (e.catch_all) j["catch_all"] = true;
        types.push_back(std::move(j));
    }
    return {{"version", t.version()}, {"types", std::move(types)}};
}

inline Taxonomy taxonomy_from_json(const nlohmann::json& j) {
    auto likelihood = [](const nlohmann::json& v) {
        auto s = v.get<std::string>();
        if (s == "always") return Likelihood::Always;
        if (s == "sometimes") return Likelihood::Sometimes;
        throw TaxonomyError("bad criteria likelihood: " + s);
    };
    std::vector<TaxonomyType> entries;
    for (const auto& t : j.at("types")) {
        TaxonomyType e;
        e.name = t.at("name").get<std::string>();
        auto cat = parse_category(t.at("category").get<std::string>());
        if (!cat) throw TaxonomyError("bad category for " + e.name);
        e.category = *cat;
        e.description = t.value("description", "");
        e.example = t.value("example", "");
        e.catch_all = t.value("catch_all", false);
        if (t.contains("criteria") && !t["criteria"].is_null()) {
            const auto& c = t["criteria"];
            e.criteria = CriteriaProfile{likelihood(c.at("c1")), likelihood(c.at("c2")), likelihood(c.at("c3"))};
        }
        entries.push_back(std::move(e));
    }
    return Taxonomy(j.at("version").get<int>(), std::move(entries));
}

inline Taxonomy load_taxonomy(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TaxonomyError("cannot open taxonomy file: " + path);
    return taxonomy_from_json(nlohmann::json::parse(in));
}

struct FinancialCategory {
    std::string name;
    std::string description;
    bool feeds_unfavorable_pass = true;
};

struct FinancialTemplate {
    int version = 1;
    std::vector<FinancialCategory> categories;

    const FinancialCategory* find(std::string_view name) const {
        auto key = text::label_key(name);
        for (const auto& c : categories)
            if (text::label_key(c.name) == key) return &c;
        return nullptr;
    }
};

inline const FinancialTemplate& default_financial_template() {
    static const FinancialTemplate tpl{1, {
        {"Subscription/Product Terms", "Subscription charges, billing cycles and automatic renewal."},
        {"Service Termination Policy", "Money consequences of ending a service."},
        {"Payment and Purchase Term", "Payment methods, processing fees and currency conversion."},
        {"Return and Refund Policy", "Returning products, refunds and cancelling orders."},
        {"Insurance and Warranty Term", "Coverage, claims, exclusions and premiums."},
        {"Promotions and Rewards", "Offers, discounts, loyalty schemes and reward points."},
        {"Shipping and Handling Terms", "Delivery costs and shipping rules."},
        {"Dispute Resolution Policy", "How disputes are raised and settled."},
        {"Investment and Trading Terms", "Rules specific to investing or trading platforms."},
        {"Intellectual Property Terms", "Rights and limits on using protected material."},
        {"Financial Glossary", "Definitions of financial vocabulary.", false},
        {"Others", "Any other financial term."},
    }};
    return tpl;
}

inline nlohmann::json to_json(const FinancialTemplate& t) {
    nlohmann::json cats = nlohmann::json::array();
    for (const auto& c : t.categories)
        cats.push_back({{"name", c.name}, {"description", c.description}, {"feeds_unfavorable_pass", c.feeds_unfavorable_pass}});
    return {{"version", t.version}, {"categories", std::move(cats)}};
}

inline FinancialTemplate financial_template_from_json(const nlohmann::json& j) {
    FinancialTemplate t;
    t.version = j.at("version").get<int>();
    for (const auto& c : j.at("categories"))
        t.categories.push_back({c.at("name").get<std::string>(), c.value("description", ""),
                                c.value("feeds_unfavorable_pass", true)});
    return t;
}

inline FinancialTemplate load_financial_template(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TaxonomyError("cannot open financial template file: " + path);
    return financial_template_from_json(nlohmann::json::parse(in));
}

} // namespace termscope
