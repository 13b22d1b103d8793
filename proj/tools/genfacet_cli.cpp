// genfacet: catalog -> index -> distill -> train -> simulate/eval -> serve.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "genfacet/config.hpp"
#include "genfacet/evalsuite.hpp"
#include "genfacet/log.hpp"
#include "genfacet/pipeline.hpp"
#include "genfacet/service.hpp"
#include "genfacet/text.hpp"
#include "genfacet/trainer.hpp"

namespace fs = std::filesystem;
using namespace genfacet;

namespace {

struct Common {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> config;
    std::optional<unsigned> threads;
    bool verbose = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--seed", c.seed, "random seed");
    cmd->add_option("--config", c.config, "JSON config (default: $GENFACET_CONFIG)");
    cmd->add_option("--threads", c.threads, "worker threads, 0 = all cores");
    cmd->add_flag("-v,--verbose", c.verbose, "log progress");
}

AppConfig resolve(const Common& c) {
    AppConfig cfg = load_config(c.config ? std::optional<fs::path>(*c.config) : std::nullopt);
    if (c.threads) cfg.threads = cfg.experiment.threads = cfg.train.threads = *c.threads;
    log::set_threshold(c.verbose ? log::Level::info : log::Level::warn);
    return cfg;
}

template <typename T>
void override_if(const std::optional<T>& flag, T& target) {
    if (flag) target = *flag;
}

Environment load_environment(const DataPaths& paths) {
    auto catalog = load_catalog(paths.catalog);
    auto kg = load_kg(paths.kg);
    std::shared_ptr<const KnowledgeProvider> provider;
    if (fs::exists(paths.trends))
        provider = std::make_shared<StubKnowledgeProvider>(StubKnowledgeProvider::from_file(paths.trends));
    else
        provider = std::make_shared<NullKnowledgeProvider>();
    std::optional<InvertedIndex> index;
    if (fs::exists(paths.index)) index = InvertedIndex::load(paths.index);
    return Environment(std::move(catalog), std::move(kg), std::move(provider), std::move(index));
}

struct PathFlags {
    std::optional<std::string> catalog, kg, trends, index;
    void add(CLI::App* cmd) {
        cmd->add_option("--catalog", catalog, "catalog JSONL");
        cmd->add_option("--kg", kg, "knowledge graph JSON");
        cmd->add_option("--trends", trends, "trend table JSON");
        cmd->add_option("--index", index, "prebuilt index (built on the fly when absent)");
    }
    void apply(DataPaths& p) const {
        if (catalog) p.catalog = *catalog;
        if (kg) p.kg = *kg;
        if (trends) p.trends = *trends;
        if (index) p.index = *index;
    }
};

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void print_json(const nlohmann::ordered_json& j) { std::cout << j.dump(2) << "\n"; }

std::unique_ptr<SearchPipeline> make_pipeline(const std::string& name, const std::optional<PolicyParams>& params,
                                              RetrievalMode mode) {
    if (name == "rule") return std::make_unique<RulePipeline>(mode);
    if (name == "gini") return std::make_unique<GiniPipeline>(mode);
    if (name == "oracle") return std::make_unique<OraclePipeline>();
    if (name == "zero-shot") return std::make_unique<PolicyPipeline>(zero_facet_params(), zero_rewrite_params(), mode);
    if (!params) throw std::invalid_argument("pipeline 'policy' needs --params");
    return std::make_unique<PolicyPipeline>(params->facet, params->rewrite, mode);
}

HttpServer* g_server = nullptr;
extern "C" void on_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generative faceted search: catalog, training, evaluation and serving"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "help for every subcommand");

    // gen-catalog
    Common gc;
    std::optional<std::size_t> gc_products, gc_categories;
    std::optional<std::string> gc_out, gc_kg, gc_trends;
    auto* gen = app.add_subcommand("gen-catalog", "generate the synthetic catalog, graph and trend table");
    add_common(gen, gc);
    gen->add_option("--products", gc_products, "number of products");
    gen->add_option("--categories", gc_categories, "number of categories");
    gen->add_option("--out", gc_out, "catalog JSONL path");
    gen->add_option("--kg", gc_kg, "knowledge graph JSON path");
    gen->add_option("--trends", gc_trends, "trend table JSON path");

    // index
    Common ic;
    std::optional<std::string> ic_catalog, ic_out;
    auto* idx = app.add_subcommand("index", "build the inverted index");
    add_common(idx, ic);
    idx->add_option("--catalog", ic_catalog, "catalog JSONL");
    idx->add_option("--out", ic_out, "index path");

    // distill
    Common dc;
    PathFlags dp;
    std::optional<std::size_t> dc_n;
    std::optional<std::string> dc_out;
    auto* dis = app.add_subcommand("distill", "label training states with the oracle teacher");
    add_common(dis, dc);
    dp.add(dis);
    dis->add_option("-n,--records", dc_n, "number of records");
    dis->add_option("--out", dc_out, "dataset JSONL path");

    // train-sft
    Common sc;
    std::optional<std::string> sc_data, sc_out;
    std::optional<std::size_t> sc_iters;
    std::optional<double> sc_lr, sc_lambda;
    auto* sft = app.add_subcommand("train-sft", "multi-task supervised fitting on a distilled dataset");
    add_common(sft, sc);
    sft->add_option("--distill", sc_data, "dataset JSONL");
    sft->add_option("--out", sc_out, "checkpoint path");
    sft->add_option("--iterations", sc_iters, "gradient steps");
    sft->add_option("--lr", sc_lr, "learning rate");
    sft->add_option("--lambda", sc_lambda, "rewrite task weight");

    // train-grpo
    Common tc;
    PathFlags tp;
    std::optional<std::string> tc_init, tc_out, tc_log, tc_data;
    std::optional<std::size_t> tc_iters, tc_group, tc_sessions, tc_flywheel;
    std::optional<double> tc_beta, tc_lr, tc_clip;
    bool tc_separate = false;
    auto* grpo = app.add_subcommand("train-grpo", "group-relative policy optimization from an SFT checkpoint");
    add_common(grpo, tc);
    tp.add(grpo);
    grpo->add_option("--init", tc_init, "SFT checkpoint");
    grpo->add_option("--out", tc_out, "checkpoint path");
    grpo->add_option("--log", tc_log, "training log JSONL path");
    grpo->add_option("--iterations", tc_iters, "iterations");
    grpo->add_option("--group-size", tc_group, "rollouts per group");
    grpo->add_option("--sessions", tc_sessions, "sessions per iteration");
    grpo->add_option("--beta", tc_beta, "KL coefficient");
    grpo->add_option("--lr", tc_lr, "learning rate");
    grpo->add_option("--clip", tc_clip, "clip epsilon (off by default)");
    grpo->add_option("--flywheel-sessions", tc_flywheel, "sessions per flywheel cycle for the click model");
    grpo->add_flag("--separate", tc_separate, "train the tasks separately (needs --distill)");
    grpo->add_option("--distill", tc_data, "dataset JSONL for --separate");

    // simulate
    Common mc;
    PathFlags mp;
    std::optional<std::string> mc_params, mc_out;
    std::string mc_pipeline = "policy", mc_mode = "generative";
    std::optional<std::size_t> mc_sessions;
    auto* sim = app.add_subcommand("simulate", "run simulated sessions against a pipeline");
    add_common(sim, mc);
    mp.add(sim);
    sim->add_option("--params", mc_params, "checkpoint for the policy pipeline");
    sim->add_option("--pipeline", mc_pipeline, "rule|gini|zero-shot|policy|oracle")
        ->check(CLI::IsMember({"rule", "gini", "zero-shot", "policy", "oracle"}));
    sim->add_option("--mode", mc_mode, "generative|boolean")->check(CLI::IsMember({"generative", "boolean"}));
    sim->add_option("--sessions", mc_sessions, "number of sessions");
    sim->add_option("--out", mc_out, "session log JSONL path");

    // eval
    Common ec;
    PathFlags ep;
    std::string ec_ablation = "all", ec_format = "text";
    std::optional<std::string> ec_full, ec_sft, ec_sep, ec_out;
    std::optional<std::size_t> ec_sessions;
    bool ec_standard = false;
    auto* ev = app.add_subcommand("eval", "baseline and ablation report");
    add_common(ev, ec);
    ep.add(ev);
    ev->add_option("--ablation", ec_ablation, "all or one row: rule-based, gini-rank, zero-shot, full, wo-grpo, "
                                              "wo-multitask-sft, wo-rewriting")
        ->check([](const std::string& v) {
            return v == "all" || resolve_ablation_row(v) ? std::string() : "unknown ablation row '" + v + "'";
        });
    ev->add_option("--format", ec_format, "text|json")->check(CLI::IsMember({"text", "json"}));
    ev->add_option("--full", ec_full, "checkpoint of the full model");
    ev->add_option("--sft", ec_sft, "SFT-only checkpoint (w/o GRPO)");
    ev->add_option("--separate", ec_sep, "separately trained checkpoint (w/o multi-task SFT)");
    ev->add_option("--sessions", ec_sessions, "benchmark sessions");
    ev->add_flag("--standard", ec_standard, "generate, train and evaluate everything from the config");
    ev->add_option("--out", ec_out, "also write the report here");

    // serve
    Common vc;
    PathFlags vp;
    std::optional<std::string> vc_params, vc_host, vc_static;
    std::optional<int> vc_port;
    auto* srv = app.add_subcommand("serve", "HTTP service");
    add_common(srv, vc);
    vp.add(srv);
    srv->add_option("--params", vc_params, "checkpoint (zero parameters when absent)");
    srv->add_option("--host", vc_host, "bind address");
    srv->add_option("--port", vc_port, "port (0 = any free port)");
    srv->add_option("--static", vc_static, "directory with the browser client");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (gen->parsed()) {
            AppConfig cfg = resolve(gc);
            override_if(gc.seed, cfg.catalog.seed);
            override_if(gc_products, cfg.catalog.num_products);
            override_if(gc_categories, cfg.catalog.num_categories);
            if (gc_out) cfg.paths.catalog = *gc_out;
            if (gc_kg) cfg.paths.kg = *gc_kg;
            if (gc_trends) cfg.paths.trends = *gc_trends;
            auto g = generate_catalog(cfg.catalog);
            for (const auto& p : {cfg.paths.catalog, cfg.paths.kg, cfg.paths.trends}) ensure_parent(p);
            save_catalog(g.catalog, cfg.paths.catalog);
            save_kg(g.kg, cfg.paths.kg);
            write_text_file(cfg.paths.trends, StubKnowledgeProvider(make_trend_table(g.kg, cfg.catalog.seed)).to_json());
            print_json({{"products", g.catalog.size()},
                        {"categories", g.kg.categories.size()},
                        {"catalog", cfg.paths.catalog.string()}});
        } else if (idx->parsed()) {
            AppConfig cfg = resolve(ic);
            if (ic_catalog) cfg.paths.catalog = *ic_catalog;
            if (ic_out) cfg.paths.index = *ic_out;
            const auto index = build_index(load_catalog(cfg.paths.catalog));
            ensure_parent(cfg.paths.index);
            index.save(cfg.paths.index);
            print_json({{"documents", index.doc_count()}, {"index", cfg.paths.index.string()}});
        } else if (dis->parsed()) {
            AppConfig cfg = resolve(dc);
            dp.apply(cfg.paths);
            if (dc_out) cfg.paths.distill = *dc_out;
            const auto env = load_environment(cfg.paths);
            const auto data = build_distill_dataset(env, dc_n.value_or(cfg.experiment.distill_records),
                                                    dc.seed.value_or(cfg.train.seed), cfg.reward);
            ensure_parent(cfg.paths.distill);
            save_distill_dataset(data, cfg.paths.distill);
            print_json({{"records", data.size()}, {"distill", cfg.paths.distill.string()}});
        } else if (sft->parsed()) {
            AppConfig cfg = resolve(sc);
            if (sc_data) cfg.paths.distill = *sc_data;
            if (sc_out) cfg.paths.params = *sc_out;
            override_if(sc_iters, cfg.sft.iterations);
            override_if(sc_lr, cfg.sft.learning_rate);
            override_if(sc_lambda, cfg.sft.lambda);
            const auto data = load_distill_dataset(cfg.paths.distill);
            const auto res = train_sft(PolicyParams{}, data, cfg.sft);
            ensure_parent(cfg.paths.params);
            save_checkpoint({res.params, CtrModel{}, ""}, cfg.paths.params);
            print_json({{"initial_loss", res.initial_loss},
                        {"final_loss", res.final_loss},
                        {"params", cfg.paths.params.string()}});
        } else if (grpo->parsed()) {
            AppConfig cfg = resolve(tc);
            tp.apply(cfg.paths);
            override_if(tc.seed, cfg.train.seed);
            override_if(tc_iters, cfg.train.iterations);
            override_if(tc_group, cfg.train.group_size);
            override_if(tc_sessions, cfg.train.sessions_per_iteration);
            override_if(tc_beta, cfg.train.beta);
            override_if(tc_lr, cfg.train.learning_rate);
            if (tc_clip) cfg.train.clip_epsilon = *tc_clip;
            override_if(tc_flywheel, cfg.experiment.flywheel_sessions);
            cfg.train.validate();
            if (!tc_init) throw std::invalid_argument("train-grpo needs --init (an SFT checkpoint)");
            const fs::path out = tc_out ? fs::path(*tc_out) : cfg.paths.params;
            const auto env = load_environment(cfg.paths);
            const PolicyParams init = load_checkpoint(*tc_init).params;

            std::vector<FlywheelHarvest> cycles;
            cycles.push_back(harvest_flywheel(env, RulePipeline(), cfg.experiment.flywheel_sessions,
                                              derive_seed(cfg.train.seed, {1}), cfg.sim, cfg.threads));
            cycles.push_back(harvest_flywheel(env, PolicyPipeline(init.facet, init.rewrite),
                                              cfg.experiment.flywheel_sessions, derive_seed(cfg.train.seed, {7}),
                                              cfg.sim, cfg.threads));
            double heldout = 0.0;
            GrpoEnvironment genv{env, fit_flywheel(cycles, &heldout), cfg.reward, cfg.sim};
            log::info("click model held-out log-loss " + format_number(heldout));

            Checkpoint ck{PolicyParams{}, genv.ctr, config_hash(cfg.train)};
            nlohmann::ordered_json summary;
            if (tc_separate) {
                if (!tc_data) throw std::invalid_argument("--separate needs --distill");
                const auto data = load_distill_dataset(*tc_data);
                ck.params = train_separate(PolicyParams{}, data, genv, cfg.sft, cfg.train);
                summary["separate"] = true;
            } else {
                const auto res = train_grpo(init, genv, cfg.train);
                ck.params = res.params;
                if (tc_log) {
                    ensure_parent(*tc_log);
                    write_text_file(*tc_log, training_log_jsonl(res.log));
                }
                if (!res.log.empty()) {
                    summary["first_mean_reward"] = res.log.front().mean_reward;
                    summary["last_mean_reward"] = res.log.back().mean_reward;
                    summary["final_kl"] = res.log.back().kl;
                }
            }
            ensure_parent(out);
            save_checkpoint(ck, out);
            summary["params"] = out.string();
            summary["config_hash"] = ck.config_hash;
            print_json(summary);
        } else if (sim->parsed()) {
            AppConfig cfg = resolve(mc);
            mp.apply(cfg.paths);
            const auto env = load_environment(cfg.paths);
            std::optional<PolicyParams> params;
            if (mc_params) params = load_checkpoint(*mc_params).params;
            const auto pipeline = make_pipeline(mc_pipeline, params, *parse_retrieval_mode(mc_mode));
            const std::uint64_t seed = mc.seed.value_or(cfg.train.seed);
            const auto specs = sample_sessions(env, mc_sessions.value_or(cfg.experiment.benchmark_sessions), seed,
                                               cfg.sim.trend_boost);
            const auto logs = run_sessions(env, *pipeline, specs, cfg.sim, derive_seed(seed, {1}), cfg.threads);
            if (mc_out) {
                ensure_parent(*mc_out);
                save_session_logs(logs, *mc_out);
            }
            const auto eng = simulated_ctr_ucvr(logs);
            print_json({{"sessions", logs.size()}, {"ctr", eng.ctr}, {"ucvr", eng.ucvr}});
        } else if (ev->parsed()) {
            AppConfig cfg = resolve(ec);
            ep.apply(cfg.paths);
            override_if(ec_sessions, cfg.experiment.benchmark_sessions);
            const std::uint64_t seed = ec.seed.value_or(cfg.train.seed);
            Report report;
            if (ec_standard) {
                CatalogConfig cc = cfg.catalog;
                cc.seed = seed;
                const auto env = Environment::synthetic(cc);
                report = run_standard_experiment(env, cfg.experiment, seed).report;
                if (ec_ablation != "all") {
                    const auto id = resolve_ablation_row(ec_ablation);
                    std::erase_if(report.rows, [&](const ReportRow& r) {
                        return r.system != report.baseline && resolve_ablation_row(r.system) != id;
                    });
                }
            } else {
                const auto env = load_environment(cfg.paths);
                TrainedArtifacts art;
                if (ec_full) art.full = load_checkpoint(*ec_full).params;
                if (ec_sft) art.sft_only = load_checkpoint(*ec_sft).params;
                if (ec_sep) art.separate = load_checkpoint(*ec_sep).params;
                SuiteOptions opts;
                opts.sim = cfg.sim;
                opts.seed = derive_seed(seed, {6});
                opts.threads = cfg.threads;
                if (ec_ablation != "all") opts.rows = {ec_ablation};
                const auto bench = build_benchmark(env, cfg.experiment.benchmark_sessions, derive_seed(seed, {5}));
                report = run_ablation_suite(env, bench, art, opts);
            }
            const std::string text = ec_format == "json" ? report.to_json() : report.to_text();
            std::cout << text;
            if (ec_out) {
                ensure_parent(*ec_out);
                write_text_file(*ec_out, text);
            }
        } else if (srv->parsed()) {
            AppConfig cfg = resolve(vc);
            vp.apply(cfg.paths);
            if (vc_host) cfg.service.host = *vc_host;
            override_if(vc_port, cfg.service.port);
            if (!vc.verbose) log::set_threshold(log::Level::info);
            const auto env = load_environment(cfg.paths);
            PolicyParams params;
            if (vc_params) params = load_checkpoint(*vc_params).params;
            else if (fs::exists(cfg.paths.params)) params = load_checkpoint(cfg.paths.params).params;
            FacetService service(env, params, cfg.service);
            HttpServer server(service);
            if (vc_static) server.mount_static(*vc_static);
            const int port = server.bind(cfg.service.host, cfg.service.port);
            std::cout << "listening on http://" << cfg.service.host << ":" << port << std::endl;
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            server.listen();
            g_server = nullptr;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
