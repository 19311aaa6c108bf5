#include "termscope/termscope.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

using namespace termscope;

namespace {

struct Globals {
    std::string corpus;
    std::string config_file;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
};

Config build_config(const Globals& g) {
    Config c = g.config_file.empty() ? Config() : Config::load(g.config_file);
    c.apply_env();
    for (const auto& kv : g.overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
        c.set(std::string(text::trim(std::string_view(kv).substr(0, eq))),
              std::string(text::trim(std::string_view(kv).substr(eq + 1))));
    }
    if (!g.corpus.empty()) c.set("corpus", g.corpus);
    if (g.seed) c.set("seed", std::to_string(*g.seed));
    return c;
}

void print_stage(const StageResult& r) { std::cout << to_json(r).dump() << "\n"; }

std::deque<ReviewAction> load_review_script(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read review script: " + path);
    std::deque<ReviewAction> out;
    std::string line;
    while (std::getline(in, line)) {
        auto t = std::string(text::trim(line));
        if (t.empty() || t.front() == '#') continue;
        auto sp = t.find(' ');
        auto verb = text::to_lower(t.substr(0, sp));
        auto arg = sp == std::string::npos ? std::string() : std::string(text::trim(std::string_view(t).substr(sp)));
        if (verb == "accept") out.push_back(ReviewAction::accept(arg));
        else if (verb == "reject") out.push_back(ReviewAction::reject());
        else if (verb == "merge") out.push_back(ReviewAction::merge_into(arg));
        else if (verb == "defer") out.push_back(ReviewAction::defer());
        else throw ConfigError("unknown review action: " + verb);
    }
    return out;
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
    if (g_server) g_server->stop();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"termscope: terms-and-conditions mining and unfavorable financial term alerts"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--corpus", g.corpus, "Corpus directory");
    app.add_option("--config", g.config_file, "key = value config file");
    app.add_option("--seed", g.seed, "Seed for sampling and splits");
    app.add_option("--set", g.overrides, "Override a config key (key=value)");

    std::string sites_file, mode;
    auto* harvest = app.add_subcommand("harvest", "Fetch homepages of the input site list");
    std::optional<std::size_t> top;
    harvest->add_option("--input,--sites", sites_file, "Site list (rank,domain or url[,source] per line)");
    harvest->add_option("--top", top, "Only the first N entries of the list");
    harvest->add_option("--mode", mode, "url_only | url_html | url_screenshot");

    auto* classify_sites = app.add_subcommand("classify-sites", "Shopping-site and language classification");
    classify_sites->add_option("--mode", mode, "url_only | url_html | url_screenshot");

    std::string patterns_file;
    int depth = -1;
    auto* discover = app.add_subcommand("discover-tc", "Discover terms pages by link patterns");
    discover->add_option("--patterns", patterns_file, "Pattern override file");
    discover->add_option("--depth", depth, "Snowball depth limit");

    app.add_subcommand("extract", "Segment terms pages into terms");

    std::string stage_name, model_id, taxonomy_file, financial_file;
    auto* classify = app.add_subcommand("classify", "Run one classification pass");
    classify->add_option("--stage", stage_name, "financial | unfavorable")->required()->check(CLI::IsMember({"financial", "unfavorable"}));
    classify->add_option("--model", model_id, "Model id");
    classify->add_option("--taxonomy", taxonomy_file, "Taxonomy JSON file");
    classify->add_option("--financial-template", financial_file, "Financial template JSON file");

    std::optional<double> eps;
    std::optional<std::size_t> min_pts;
    std::string embedding;
    auto* cluster = app.add_subcommand("cluster", "Embed pass-1 positives and run DBSCAN");
    cluster->add_option("--eps", eps, "Cosine-distance radius");
    cluster->add_option("--min-pts", min_pts, "Density threshold");
    cluster->add_option("--embedding", embedding, "mock:<file> | hash:<dim> | http(s) endpoint");

    std::string template_in, template_out, script_file;
    bool review = false, auto_accept = false;
    auto* topics = app.add_subcommand("topics", "Topic-template induction over stored clusters");
    topics->add_option("--template", template_in, "Existing topic template JSON");
    topics->add_option("--out", template_out, "Where to write the resulting template");
    auto* review_flag = topics->add_flag("--review", review, "Interactive review on the terminal");
    auto* auto_flag = topics->add_flag("--auto-accept", auto_accept, "Accept every proposal");
    auto* script_opt = topics->add_option("--script", script_file, "Scripted review actions");
    review_flag->excludes(auto_flag)->excludes(script_opt);
    auto_flag->excludes(script_opt);

    std::string stats_out, plots_dir;
    auto* measure = app.add_subcommand("measure", "Corpus statistics and plot data");
    measure->add_option("--out", stats_out, "Stats JSON file");
    measure->add_option("--plots", plots_dir, "Directory for CSV plot data");

    std::string pred_file, gold_file, eval_out;
    auto* eval = app.add_subcommand("eval", "Binary classifier metrics");
    eval->add_option("--pred", pred_file, "Predictions")->required();
    eval->add_option("--gold", gold_file, "Gold labels")->required();
    eval->add_option("--out", eval_out, "Metrics JSON file");

    std::string annotated_file, split_out;
    double ratio = 0.5;
    auto* split = app.add_subcommand("split", "Stratified fine-tuning/validation split");
    split->add_option("--input", annotated_file, "Annotated terms JSONL")->required();
    split->add_option("--ratio", ratio, "Fine-tuning share");
    split->add_option("--out", split_out, "Split JSON file")->required();

    std::string split_file, train_out, which = "fine_tuning";
    auto* export_ft = app.add_subcommand("export-finetune", "Write fine-tuning records");
    export_ft->add_option("--split", split_file, "Split JSON file")->required();
    export_ft->add_option("--out", train_out, "Output JSONL")->required();
    export_ft->add_option("--set-name", which, "fine_tuning | validation")->check(CLI::IsMember({"fine_tuning", "validation"}));

    std::optional<int> port;
    std::string host, cors;
    auto* serve = app.add_subcommand("serve", "Run the alert service");
    serve->add_option("--port", port, "Listen port");
    serve->add_option("--host", host, "Listen address");
    serve->add_option("--cors", cors, "Comma-separated allowed origins");

    std::string run_stats, run_plots;
    auto* run = app.add_subcommand("run", "Full measurement run");
    run->add_option("--input,--sites", sites_file, "Site list");
    run->add_option("--top", top, "Only the first N entries of the list");
    run->add_option("--out", run_stats, "Stats JSON file");
    run->add_option("--plots", run_plots, "Directory for CSV plot data");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfigError;
    }

    try {
        auto config = build_config(g);
        if (!mode.empty()) config.set("harvest.mode", mode);
        if (!patterns_file.empty()) config.set("patterns.file", patterns_file);
        if (depth >= 0) config.set("crawl.depth", std::to_string(depth));
        if (!model_id.empty()) config.set("model.id", model_id);
        if (!taxonomy_file.empty()) config.set("taxonomy.file", taxonomy_file);
        if (!financial_file.empty()) config.set("financial.file", financial_file);
        if (eps) config.set("cluster.eps", std::to_string(*eps));
        if (min_pts) config.set("cluster.min_pts", std::to_string(*min_pts));
        if (!embedding.empty()) config.set("embedding.endpoint", embedding);
        if (port) config.set("serve.port", std::to_string(*port));
        if (!host.empty()) config.set("serve.host", host);
        if (!cors.empty()) config.set("serve.cors_origins", cors);
        if (!sites_file.empty()) config.set("sites", sites_file);
        const auto seed = static_cast<std::uint64_t>(config.integer("seed"));

        if (*eval) {
            auto m = compute_metrics(load_binary_labels(pred_file), load_binary_labels(gold_file));
            auto j = to_json(m);
            std::cout << j.dump(2) << "\n";
            if (!eval_out.empty()) std::ofstream(eval_out, std::ios::trunc) << j.dump(2) << "\n";
            return kExitSuccess;
        }
        if (*split) {
            auto s = make_split(load_annotated_terms(annotated_file), ratio, seed);
            std::ofstream(split_out, std::ios::trunc) << to_json(s).dump(2) << "\n";
            std::cout << "fine_tuning " << s.fine_tuning.size() << ", validation " << s.validation.size() << "\n";
            return kExitSuccess;
        }
        if (*export_ft) {
            std::ifstream in(split_file);
            if (!in) throw ConfigError("cannot read split file: " + split_file);
            auto s = annotation_split_from_json(nlohmann::json::parse(in));
            Taxonomy taxonomy = config.str("taxonomy.file").empty() ? default_taxonomy() : load_taxonomy(config.str("taxonomy.file"));
            auto n = export_finetune_file(which == "fine_tuning" ? s.fine_tuning : s.validation,
                                          unfavorable_taxonomy_prompt(taxonomy), train_out, taxonomy);
            std::cout << n << " records written to " << train_out << "\n";
            return kExitSuccess;
        }

        const bool needs_model = *classify_sites || *classify || *topics || *serve || *run;
        auto rt = make_runtime(config, needs_model);

        auto sites = [&] {
            if (config.str("sites").empty()) throw ConfigError("no site list given (--sites or sites = ...)");
            auto list = load_site_list(config.str("sites"));
            if (top && list.size() > *top) list.resize(*top);
            return list;
        };

        if (*harvest) print_stage(stage_harvest(rt, sites()));
        else if (*classify_sites) print_stage(stage_classify_sites(rt));
        else if (*discover) print_stage(stage_discover(rt));
        else if (*app.get_subcommand("extract")) print_stage(stage_extract(rt));
        else if (*classify) print_stage(stage_classify(rt, parse_stage(stage_name)));
        else if (*cluster) {
            auto provider = make_embedding_provider(config.str("embedding.endpoint"), config.str("embedding.model"));
            ClusterParams p{config.real("cluster.eps"), static_cast<std::size_t>(config.integer("cluster.min_pts"))};
            auto a = stage_cluster(rt, *provider, p);
            std::cout << nlohmann::json{{"points", a.term_ids.size()}, {"clusters", a.cluster_count()}, {"noise", a.noise_count()}}.dump()
                      << "\n";
        } else if (*topics) {
            TopicTemplate initial = template_in.empty() ? topic_template_from_financial(rt.gateway->financial_template())
                                                        : load_topic_template(template_in);
            std::unique_ptr<Reviewer> reviewer;
            if (review) reviewer = std::make_unique<InteractiveReviewer>();
            else if (!script_file.empty()) reviewer = std::make_unique<ScriptedReviewer>(load_review_script(script_file));
            else if (auto_accept) reviewer = std::make_unique<AutoAcceptReviewer>();
            else reviewer = std::make_unique<ScriptedReviewer>(std::deque<ReviewAction>{});
            InductionParams ip;
            ip.sample_size = static_cast<std::size_t>(config.integer("topics.sample_size"));
            ip.max_rounds = static_cast<int>(config.integer("topics.max_rounds"));
            ip.seed = seed;
            auto out = template_out.empty() ? (topics_dir(rt) / "template.json").string() : template_out;
            auto r = stage_topics(rt, initial, *reviewer, out, ip);
            std::cout << to_json(r.coverage).dump(2) << "\n";
        } else if (*measure) {
            auto stats = stage_measure(rt, stats_out.empty() ? std::nullopt : std::optional<std::filesystem::path>(stats_out),
                                       plots_dir.empty() ? std::nullopt : std::optional<std::filesystem::path>(plots_dir));
            std::cout << to_json(stats).dump(2) << "\n";
        } else if (*run) {
            auto m = run_measurement(rt, sites(), run_stats.empty() ? std::nullopt : std::optional<std::filesystem::path>(run_stats),
                                     run_plots.empty() ? std::nullopt : std::optional<std::filesystem::path>(run_plots));
            for (const auto& s : m.stages) print_stage(s);
            std::cout << to_json(m.stats).dump(2) << "\n";
        } else if (*serve) {
            LensConfig lc;
            lc.ttl_seconds = config.real("lens.ttl_seconds");
            lc.payment_mode = parse_payment_mode(config.str("lens.payment_mode"));
            lc.crawl_depth = static_cast<int>(config.integer("crawl.depth"));
            lc.workers = rt.workers();
            lc.patterns = rt.patterns;
            LensService service(rt.gateway, [&rt] { return rt.new_fetcher(); }, lc);
            httplib::Server server;
            install_routes(server, service, ServerConfig{config.list("serve.cors_origins")});
            g_server = &server;
            std::signal(SIGINT, stop_server);
            std::signal(SIGTERM, stop_server);
            auto h = config.str("serve.host");
            auto p = static_cast<int>(config.integer("serve.port"));
            std::cerr << "listening on " << h << ":" << p << "\n";
            if (!server.listen(h, p)) throw StageFailure("cannot listen on " + h + ":" + std::to_string(p));
        }
        return kExitSuccess;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "stage failure: " << e.what() << "\n";
        return kExitStageFailure;
    }
}
