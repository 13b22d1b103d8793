#include "genfacet/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "genfacet/log.hpp"
#include "genfacet/pipeline.hpp"

namespace genfacet {

namespace {

std::size_t hits_at_k(const std::vector<std::string>& generated, const std::vector<std::string>& gold, std::size_t k) {
    if (k == 0) throw std::invalid_argument("k must be >= 1");
    const std::set<std::string> g(gold.begin(), gold.end());
    std::set<std::string> seen;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < generated.size() && i < k; ++i)
        if (g.count(generated[i]) && seen.insert(generated[i]).second) ++hits;
    return hits;
}

}  // namespace

double precision_at_k(const std::vector<std::string>& generated, const std::vector<std::string>& gold, std::size_t k) {
    return static_cast<double>(hits_at_k(generated, gold, k)) / static_cast<double>(k);
}

double recall_at_k(const std::vector<std::string>& generated, const std::vector<std::string>& gold, std::size_t k) {
    if (gold.empty()) throw std::invalid_argument("recall needs a non-empty gold list");
    const std::set<std::string> g(gold.begin(), gold.end());
    return static_cast<double>(hits_at_k(generated, gold, k)) / static_cast<double>(g.size());
}

std::vector<std::string> facet_names(const FacetList& facets) {
    std::vector<std::string> out;
    out.reserve(facets.size());
    for (const auto& f : facets) out.push_back(f.name);
    return out;
}

double precision_at_k(const FacetList& generated, const FacetList& gold, std::size_t k) {
    return precision_at_k(facet_names(generated), facet_names(gold), k);
}

double recall_at_k(const FacetList& generated, const FacetList& gold, std::size_t k) {
    return recall_at_k(facet_names(generated), facet_names(gold), k);
}

double ndcg_at_k(const std::vector<std::string>& ranked, const std::map<std::string, double>& grades, std::size_t k) {
    if (k == 0) throw std::invalid_argument("k must be >= 1");
    double dcg = 0.0;
    for (std::size_t j = 0; j < ranked.size() && j < k; ++j) {
        auto it = grades.find(ranked[j]);
        if (it != grades.end()) dcg += it->second / std::log2(static_cast<double>(j) + 2.0);
    }
    std::vector<double> ideal;
    for (const auto& [_, g] : grades) ideal.push_back(g);
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double idcg = 0.0;
    for (std::size_t j = 0; j < ideal.size() && j < k; ++j) idcg += ideal[j] / std::log2(static_cast<double>(j) + 2.0);
    return idcg > 0.0 ? dcg / idcg : 0.0;
}

// ---- benchmark ----

std::vector<BenchmarkSession> build_benchmark(const Environment& env, std::size_t n, std::uint64_t seed) {
    std::vector<BenchmarkSession> out;
    out.reserve(n);
    for (auto& spec : sample_sessions(env, n, seed)) {
        BenchmarkSession b;
        b.spec = std::move(spec);
        const auto& intent = b.spec.intent;
        b.context = env.context(intent.category, b.spec.user.profile, b.spec.user.behaviors);
        auto label = oracle_teacher(env, intent, intent.category, {});
        b.gold_facets = facet_names(label.facets);
        if (label.selection)
            b.gold_rewrite = apply_action(intent.category, *label.selection, label.actions[label.gold_action]);
        for (const auto& d : intent.target_docs) b.grades[d] = 1.0;
        out.push_back(std::move(b));
    }
    return out;
}

// ---- report ----

namespace {

const char* const kMetricNames[] = {"p_at_10", "r_at_10", "ndcg_at_10", "ctr", "ucvr"};

double metric(const SystemMetrics& m, std::size_t i) {
    switch (i) {
        case 0: return m.p_at_10;
        case 1: return m.r_at_10;
        case 2: return m.ndcg_at_10;
        case 3: return m.ctr;
        default: return m.ucvr;
    }
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

const ReportRow* Report::find(const std::string& system) const {
    for (const auto& r : rows)
        if (r.system == system) return &r;
    return nullptr;
}

std::string Report::to_text() const {
    const char* headers[] = {"System", "P@10", "R@10", "nDCG@10", "CTR", "UCVR"};
    std::vector<std::vector<std::string>> cells;
    cells.push_back({headers, headers + 6});
    for (const auto& r : rows) {
        std::vector<std::string> line{r.system};
        for (std::size_t i = 0; i < 5; ++i) {
            std::string c = fixed(metric(r.metrics, i), 4);
            if (r.system != baseline) {
                auto d = r.delta.at(kMetricNames[i]);
                c += d ? " (" + std::string(*d >= 0 ? "+" : "") + fixed(100.0 * *d, 1) + "%)" : " (n/a)";
            }
            line.push_back(std::move(c));
        }
        cells.push_back(std::move(line));
    }
    std::vector<std::size_t> width(6, 0);
    for (const auto& line : cells)
        for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
    std::string out;
    for (std::size_t li = 0; li < cells.size(); ++li) {
        for (std::size_t i = 0; i < cells[li].size(); ++i) {
            const auto& c = cells[li][i];
            if (i == 0)
                out += c + std::string(width[i] - c.size(), ' ');
            else
                out += "  " + std::string(width[i] - c.size(), ' ') + c;
        }
        out += '\n';
        if (li == 0) {
            std::size_t total = 0;
            for (auto w : width) total += w + 2;
            out += std::string(total - 2, '-') + '\n';
        }
    }
    out += "deltas relative to " + baseline + "\n";
    return out;
}

std::string Report::to_json() const {
    nlohmann::ordered_json j;
    j["baseline"] = baseline;
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json row;
        row["system"] = r.system;
        nlohmann::ordered_json delta;
        for (std::size_t i = 0; i < 5; ++i) {
            row[kMetricNames[i]] = metric(r.metrics, i);
            auto d = r.delta.at(kMetricNames[i]);
            delta[kMetricNames[i]] = d ? nlohmann::ordered_json(*d) : nlohmann::ordered_json(nullptr);
        }
        row["delta"] = delta;
        j["rows"].push_back(row);
    }
    return j.dump(2) + "\n";
}

void fill_deltas(Report& report) {
    const ReportRow* base = report.find(report.baseline);
    if (!base) throw std::invalid_argument("report has no '" + report.baseline + "' row");
    const SystemMetrics b = base->metrics;
    for (auto& r : report.rows)
        for (std::size_t i = 0; i < 5; ++i) {
            const double x = metric(b, i);
            r.delta[kMetricNames[i]] = x != 0.0 ? std::optional<double>((metric(r.metrics, i) - x) / x) : std::nullopt;
        }
}

const std::vector<AblationRow>& ablation_rows() {
    static const std::vector<AblationRow> rows = {
        {"rule-based", "rule-based"},
        {"gini-rank", "gini-rank"},
        {"zero-shot", "zero-shot"},
        {"full", "full"},
        {"wo-grpo", "w/o GRPO"},
        {"wo-multitask-sft", "w/o multi-task SFT"},
        {"wo-rewriting", "w/o rewriting"},
    };
    return rows;
}

std::optional<std::string> resolve_ablation_row(const std::string& name) {
    for (const auto& r : ablation_rows())
        if (name == r.id || name == r.display) return std::string(r.id);
    return std::nullopt;
}

SystemMetrics evaluate_pipeline(const Environment& env, const SearchPipeline& pipeline,
                                const std::vector<BenchmarkSession>& bench, const SuiteOptions& options) {
    SystemMetrics m;
    if (bench.empty()) return m;
    std::vector<SessionSpec> specs;
    specs.reserve(bench.size());
    for (const auto& b : bench) specs.push_back(b.spec);
    const auto logs = run_sessions(env, pipeline, specs, options.sim, options.seed, options.threads);
    for (std::size_t i = 0; i < logs.size(); ++i) {
        std::vector<std::string> shown;
        if (!logs[i].turns.empty()) shown = facet_names(logs[i].turns.front().facets);
        m.p_at_10 += precision_at_k(shown, bench[i].gold_facets, 10);
        m.r_at_10 += recall_at_k(shown, bench[i].gold_facets, 10);
        m.ndcg_at_10 += ndcg_at_k(logs[i].final_docs(), bench[i].grades, 10);
    }
    const double n = static_cast<double>(logs.size());
    m.p_at_10 /= n;
    m.r_at_10 /= n;
    m.ndcg_at_10 /= n;
    const auto eng = simulated_ctr_ucvr(logs);
    m.ctr = eng.ctr;
    m.ucvr = eng.ucvr;
    return m;
}

Report run_ablation_suite(const Environment& env, const std::vector<BenchmarkSession>& bench,
                          const TrainedArtifacts& artifacts, const SuiteOptions& options) {
    std::set<std::string> wanted;
    for (const auto& r : options.rows) {
        auto id = resolve_ablation_row(r);
        if (!id) throw std::invalid_argument("unknown ablation row '" + r + "'");
        wanted.insert(*id);
    }
    if (!wanted.empty()) wanted.insert("rule-based");

    auto need = [](const std::optional<PolicyParams>& p, const char* row) -> const PolicyParams& {
        if (!p) throw std::invalid_argument(std::string("row '") + row + "' needs trained parameters");
        return *p;
    };

    Report report;
    report.baseline = "rule-based";
    for (const auto& row : ablation_rows()) {
        const std::string id = row.id;
        if (!wanted.empty() && !wanted.count(id)) continue;
        std::unique_ptr<SearchPipeline> p;
        if (id == "rule-based")
            p = std::make_unique<RulePipeline>();
        else if (id == "gini-rank")
            p = std::make_unique<GiniPipeline>();
        else if (id == "zero-shot")
            p = std::make_unique<PolicyPipeline>(zero_facet_params(), zero_rewrite_params());
        else if (id == "full") {
            const auto& w = need(artifacts.full, row.display);
            p = std::make_unique<PolicyPipeline>(w.facet, w.rewrite);
        } else if (id == "wo-grpo") {
            const auto& w = need(artifacts.sft_only, row.display);
            p = std::make_unique<PolicyPipeline>(w.facet, w.rewrite);
        } else if (id == "wo-multitask-sft") {
            const auto& w = need(artifacts.separate, row.display);
            p = std::make_unique<PolicyPipeline>(w.facet, w.rewrite);
        } else {
            const auto& w = need(artifacts.full, row.display);
            p = std::make_unique<PolicyPipeline>(w.facet, w.rewrite, RetrievalMode::boolean);
        }
        report.rows.push_back({row.display, evaluate_pipeline(env, *p, bench, options), {}});
    }
    fill_deltas(report);
    return report;
}

// ---- standard experiment ----

FlywheelHarvest harvest_flywheel(const Environment& env, const SearchPipeline& pipeline, std::size_t sessions,
                                 std::uint64_t seed, const SimulatorConfig& sim, unsigned threads) {
    const auto specs = sample_sessions(env, sessions, seed);
    const auto logs = run_sessions(env, pipeline, specs, sim, derive_seed(seed, {1}), threads);
    std::vector<SessionLog> fit, held;
    for (std::size_t i = 0; i < logs.size(); ++i) (i % 5 == 4 ? held : fit).push_back(logs[i]);
    return {ctr_examples(harvest_preferences(fit)), ctr_examples(harvest_preferences(held))};
}

CtrModel fit_flywheel(const std::vector<FlywheelHarvest>& cycles, double* heldout) {
    std::vector<CtrExample> fit, held;
    for (const auto& c : cycles) {
        fit.insert(fit.end(), c.fit.begin(), c.fit.end());
        held.insert(held.end(), c.heldout.begin(), c.heldout.end());
    }
    const auto model = fit_ctr_model(fit);
    if (heldout) *heldout = log_loss(model, held);
    return model;
}

double mean_policy_reward(const PolicyParams& params, const GrpoEnvironment& genv, std::size_t sessions,
                          std::uint64_t seed, unsigned threads) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.sessions_per_iteration = sessions;
    cfg.group_size = 4;
    cfg.threads = threads;
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& g : collect_rollouts(params, genv, cfg, 0))
        for (const auto& s : g.samples) {
            total += s.reward;
            ++n;
        }
    return n ? total / static_cast<double>(n) : 0.0;
}

PolicyParams train_separate(const PolicyParams& init, const std::vector<DistillRecord>& data,
                            const GrpoEnvironment& genv, const SftConfig& sft, const TrainConfig& train) {
    SftConfig fs = sft, rs = sft;
    fs.tasks = TaskMask::facet_only;
    rs.tasks = TaskMask::rewrite_only;
    PolicyParams out = init;
    out.facet = train_sft(init, data, fs).params.facet;
    out.rewrite = train_sft(init, data, rs).params.rewrite;

    TrainConfig ft = train, rt = train;
    ft.tasks = TaskMask::facet_only;
    rt.tasks = TaskMask::rewrite_only;
    ft.seed = derive_seed(train.seed, {0xface7});
    rt.seed = derive_seed(train.seed, {0x4e3});
    const PolicyParams facet_trained = train_grpo(out, genv, ft).params;
    const PolicyParams rewrite_trained = train_grpo(out, genv, rt).params;
    out.facet = facet_trained.facet;
    out.rewrite = rewrite_trained.rewrite;
    return out;
}

ExperimentResult run_standard_experiment(const Environment& env, const ExperimentConfig& config, std::uint64_t seed) {
    ExperimentResult out;
    std::vector<FlywheelHarvest> cycles;
    cycles.push_back(harvest_flywheel(env, RulePipeline(), config.flywheel_sessions, derive_seed(seed, {1}), config.sim,
                                      config.threads));

    const auto data = build_distill_dataset(env, config.distill_records, derive_seed(seed, {2}), config.reward);
    const auto sft = train_sft(PolicyParams{}, data, config.sft);
    out.sft = sft.params;
    log::info("sft loss " + format_number(sft.initial_loss) + " -> " + format_number(sft.final_loss));

    // Second cycle: logs of the deployed SFT policy join the rule-pipeline logs.
    cycles.push_back(harvest_flywheel(env, PolicyPipeline(out.sft.facet, out.sft.rewrite), config.flywheel_sessions,
                                      derive_seed(seed, {7}), config.sim, config.threads));
    out.ctr = fit_flywheel(cycles, &out.ctr_heldout_logloss);
    log::info("click model held-out log-loss " + format_number(out.ctr_heldout_logloss));

    GrpoEnvironment genv{env, out.ctr, config.reward, config.sim};
    TrainConfig tc = config.train;
    tc.seed = derive_seed(seed, {3});
    tc.threads = config.threads;
    tc.facet_count = config.sim.facet_count;
    out.grpo = train_grpo(out.sft, genv, tc);
    out.separate = train_separate(PolicyParams{}, data, genv, config.sft, tc);

    const auto eval_seed = derive_seed(seed, {4});
    out.sft_reward = mean_policy_reward(out.sft, genv, config.reward_eval_sessions, eval_seed, config.threads);
    out.grpo_reward = mean_policy_reward(out.grpo.params, genv, config.reward_eval_sessions, eval_seed, config.threads);
    log::info("mean reward sft " + format_number(out.sft_reward) + " grpo " + format_number(out.grpo_reward));

    const auto bench = build_benchmark(env, config.benchmark_sessions, derive_seed(seed, {5}));
    SuiteOptions opts;
    opts.sim = config.sim;
    opts.seed = derive_seed(seed, {6});
    opts.threads = config.threads;
    out.report = run_ablation_suite(env, bench, {out.grpo.params, out.sft, out.separate}, opts);
    return out;
}

}  // namespace genfacet
