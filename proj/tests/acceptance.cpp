// Acceptance run: one PASS/FAIL line per criterion. Exit status 1 when any fails.
//
//   acceptance [--threads N] [--only name,...]

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <set>
#include <sstream>

#include "genfacet/evalsuite.hpp"
#include "genfacet/log.hpp"
#include "genfacet/service.hpp"
#include "genfacet/text.hpp"
#include "oracles.hpp"
#include "random_inputs.hpp"

using namespace genfacet;
using namespace random_inputs;
using clk = std::chrono::steady_clock;

namespace {

double seconds_since(clk::time_point t) { return std::chrono::duration<double>(clk::now() - t).count(); }

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

/// Collects failures; an empty list means the criterion holds.
struct Check {
    std::vector<std::string> failures;
    std::vector<std::string> notes;
    void expect(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
    void note(const std::string& s) { notes.push_back(s); }
};

void report(const std::string& name, const Check& c, double secs, double limit) {
    const bool in_time = limit <= 0 || secs < limit;
    const bool pass = c.failures.empty() && in_time;
    std::string detail;
    for (const auto& n : c.notes) detail += (detail.empty() ? "" : "; ") + n;
    for (const auto& f : c.failures) detail += (detail.empty() ? "" : "; ") + ("FAILED " + f);
    if (!in_time) detail += (detail.empty() ? "" : "; ") + std::string("over the time limit");
    std::printf("%s %s (%.1f s%s)%s%s\n", pass ? "PASS" : "FAIL", name.c_str(), secs,
                limit > 0 ? (", limit " + fmt("%.0f", limit) + " s").c_str() : "", detail.empty() ? "" : ": ",
                detail.c_str());
    std::fflush(stdout);
}

// ---- metrics ----

Check metric_oracles() {
    Check c;
    std::map<std::string, double> grades{{"a", 1}, {"c", 1}};
    const double worked = ndcg_at_k({"a", "b", "c"}, grades, 10);
    c.expect(std::abs(worked - 0.919721) < 5e-7, "worked nDCG " + fmt("%.6f", worked));
    c.note("worked nDCG " + fmt("%.6f", worked));
    Rng rng(2024);
    auto pick = [&](std::size_t n, std::size_t vocab) {
        std::vector<std::string> v;
        for (std::size_t i = 0; i < n; ++i) v.push_back("d" + std::to_string(rng.below(vocab)));
        return v;
    };
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t vocab = 3 + rng.below(40), k = 1 + rng.below(15);
        auto gen = pick(rng.below(20), vocab);
        std::sort(gen.begin(), gen.end());
        gen.erase(std::unique(gen.begin(), gen.end()), gen.end());
        rng.shuffle(gen);
        auto gold = pick(1 + rng.below(12), vocab);
        std::sort(gold.begin(), gold.end());
        gold.erase(std::unique(gold.begin(), gold.end()), gold.end());
        std::map<std::string, double> g;
        for (const auto& d : pick(rng.below(10), vocab)) g[d] = 1.0;
        auto ranked = pick(rng.below(20), vocab);
        worst = std::max({worst, std::abs(precision_at_k(gen, gold, k) - oracle::precision(gen, gold, k)),
                          std::abs(recall_at_k(gen, gold, k) - oracle::recall(gen, gold, k)),
                          std::abs(ndcg_at_k(ranked, g, k) - oracle::ndcg(ranked, g, k))});
    }
    c.expect(worst <= 1e-9, "max deviation " + fmt("%.3g", worst));
    c.note("1000 cases, max deviation " + fmt("%.3g", worst));
    return c;
}

// ---- probability ----

Check probability_soundness() {
    Check c;
    Rng rng(7);
    double worst_sum = 0.0, worst_shift = 0.0;
    for (int rep = 0; rep < 20; ++rep)
        for (std::size_t n = 1; n <= 6; ++n)
            for (std::size_t k = 1; k <= std::min<std::size_t>(3, n); ++k) {
                FeatureMatrix rows;
                for (std::size_t i = 0; i < n; ++i) rows.push_back(random_vec(rng, 4, 1.0));
                LinearPolicy p{random_vec(rng, 4, 3.0), 1.0};
                double total = 0.0;
                for (const auto& o : oracle::ordered_subsets(n, k)) total += std::exp(pl_log_prob(p, rows, o));
                worst_sum = std::max(worst_sum, std::abs(total - 1.0));
                // Shift every score by a constant through an extra constant feature.
                auto shifted = rows;
                for (auto& r : shifted) r.push_back(1.0);
                auto q = p;
                q.weights.push_back(rng.uniform(-50, 50));
                for (const auto& o : oracle::ordered_subsets(n, k))
                    worst_shift = std::max(worst_shift, std::abs(pl_log_prob(p, rows, o) - pl_log_prob(q, shifted, o)));
            }
    c.expect(worst_sum <= 1e-9, "sum deviation " + fmt("%.3g", worst_sum));
    c.expect(worst_shift <= 1e-12, "shift deviation " + fmt("%.3g", worst_shift));
    c.note("sum deviation " + fmt("%.3g", worst_sum) + ", shift deviation " + fmt("%.3g", worst_shift));
    return c;
}

// ---- GRPO numerics ----

Check grpo_numerics(const std::vector<DistillRecord>& data) {
    Check c;
    Rng rng(99);
    double worst_sft = 0.0, worst_grpo = 0.0;
    for (int t = 0; t < 20; ++t) {
        const auto& r = data[rng.below(data.size())];
        auto p = random_params(rng);
        const double lambda = rng.uniform(0.0, 2.0);
        std::vector<double> g(p.dim(), 0.0);
        sft_loss_grad(p, r, lambda, 1.0, g);
        worst_sft = std::max(worst_sft, vec_rel_err(g, central_diff(p, [&](const PolicyParams& q) {
                                             return sft_loss(q, r, lambda);
                                         })));

        auto old = random_params(rng), ref = random_params(rng);
        auto groups = random_groups(rng, old, 1 + rng.below(3), 2 + rng.below(7));  // G <= 8
        auto at = old;
        auto flat = at.flatten();
        for (auto& x : flat) x += rng.uniform(-0.2, 0.2);
        at.assign(flat);
        const double beta = rng.uniform(0.0, 0.5);
        std::vector<double> gg(at.dim(), 0.0);
        grpo_objective(at, ref, groups, beta, std::nullopt, gg);
        worst_grpo = std::max(worst_grpo, vec_rel_err(gg, central_diff(at, [&](const PolicyParams& q) {
                                              return grpo_objective(q, ref, groups, beta);
                                          })));
    }
    c.expect(worst_sft < 1e-4, "sft gradient rel err " + fmt("%.3g", worst_sft));
    c.expect(worst_grpo < 1e-4, "objective gradient rel err " + fmt("%.3g", worst_grpo));

    double worst_mean = 0.0, worst_std = 0.0;
    for (int t = 0; t < 1000; ++t) {
        auto r = random_vec(rng, 2 + rng.below(7), 3.0);
        auto a = compute_advantages(r);
        double m = 0, v = 0;
        for (double x : a) m += x;
        m /= a.size();
        for (double x : a) v += (x - m) * (x - m);
        worst_mean = std::max(worst_mean, std::abs(m));
        worst_std = std::max(worst_std, std::abs(std::sqrt(v / a.size()) - 1.0));
    }
    c.expect(worst_mean <= 1e-9 && worst_std <= 1e-9, "advantage moments");

    double min_kl = 1e300;
    for (int t = 0; t < 10000; ++t) {
        const std::size_t n = 1 + rng.below(12), k = 1 + rng.below(std::min<std::size_t>(4, n));
        FeatureMatrix rows;
        for (std::size_t i = 0; i < n; ++i) rows.push_back(random_vec(rng, kFacetFeatureDim, 1.0));
        LinearPolicy p{random_vec(rng, kFacetFeatureDim, 3.0), 1.0}, q{random_vec(rng, kFacetFeatureDim, 3.0), 1.0};
        min_kl = std::min(min_kl, kl_divergence(p, q, rows, k));
    }
    c.expect(min_kl >= 0.0, "negative KL " + fmt("%.3g", min_kl));

    int nonzero = 0;
    for (int t = 0; t < 200; ++t) {
        auto p = random_params(rng);
        auto groups = random_groups(rng, p, 1 + rng.below(4), 2 + rng.below(7));
        nonzero += grpo_objective(p, p, groups, 0.04) != 0.0;
    }
    c.expect(nonzero == 0, std::to_string(nonzero) + " non-zero objectives at the reference");
    c.note("grad rel err sft " + fmt("%.2g", worst_sft) + " objective " + fmt("%.2g", worst_grpo) + ", min KL " +
           fmt("%.3g", min_kl) + " over 1e4 pairs");
    return c;
}

// ---- experiments ----

struct SeedRun {
    std::uint64_t seed = 0;
    ExperimentResult result;
    double final_kl = 0.0;
    double final_kl_beta100 = 0.0;
    double seconds = 0.0;
};

SeedRun run_seed(std::uint64_t seed, unsigned threads) {
    SeedRun run;
    run.seed = seed;
    const auto t0 = clk::now();
    CatalogConfig cc;
    cc.seed = seed;
    const auto env = Environment::synthetic(cc);
    ExperimentConfig cfg;
    cfg.catalog = cc;
    cfg.threads = threads;
    run.result = run_standard_experiment(env, cfg, seed);
    run.final_kl = run.result.grpo.log.back().kl;

    // Same run with a 100x KL coefficient; everything else identical.
    GrpoEnvironment genv{env, run.result.ctr, cfg.reward, cfg.sim};
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(seed, {3});
    tc.threads = threads;
    tc.facet_count = cfg.sim.facet_count;
    tc.beta *= 100.0;
    run.final_kl_beta100 = train_grpo(run.result.sft, genv, tc).log.back().kl;
    run.seconds = seconds_since(t0);
    return run;
}

Check training_efficacy(const std::vector<SeedRun>& runs) {
    Check c;
    for (const auto& r : runs) {
        const double gain = r.result.grpo_reward / r.result.sft_reward - 1.0;
        c.expect(gain >= 0.10, "seed " + std::to_string(r.seed) + " reward gain " + fmt("%+.1f%%", 100 * gain));
        c.expect(r.final_kl_beta100 < r.final_kl, "seed " + std::to_string(r.seed) + " KL not reduced");
        c.note("seed " + std::to_string(r.seed) + ": reward " + fmt("%.3f", r.result.sft_reward) + " -> " +
               fmt("%.3f", r.result.grpo_reward) + " (" + fmt("%+.1f%%", 100 * gain) + "), KL " +
               fmt("%.4f", r.final_kl) + " vs " + fmt("%.4f", r.final_kl_beta100) + " at 100x beta");
    }
    return c;
}

Check table_one(const std::vector<SeedRun>& runs) {
    Check c;
    for (const auto& r : runs) {
        const auto& rep = r.result.report;
        const auto* full = rep.find("full");
        const auto* rule = rep.find("rule-based");
        const auto* zero = rep.find("zero-shot");
        const std::string s = "seed " + std::to_string(r.seed) + " ";
        if (!full || !rule || !zero) {
            c.expect(false, s + "missing rows");
            continue;
        }
        c.expect(full->metrics.r_at_10 > rule->metrics.r_at_10, s + "R@10 full <= rule");
        c.expect(full->metrics.ndcg_at_10 > rule->metrics.ndcg_at_10, s + "nDCG full <= rule");
        for (const char* row : {"w/o GRPO", "w/o multi-task SFT", "w/o rewriting"}) {
            const auto* ab = rep.find(row);
            c.expect(ab && full->metrics.ndcg_at_10 > ab->metrics.ndcg_at_10, s + "nDCG full <= " + row);
        }
        c.expect(zero->metrics.p_at_10 < rule->metrics.p_at_10, s + "zero-shot P@10 >= rule");
        std::string n = s + "nDCG full " + fmt("%.3f", full->metrics.ndcg_at_10);
        for (const char* row : {"w/o GRPO", "w/o multi-task SFT", "w/o rewriting"})
            if (const auto* ab = rep.find(row)) n += std::string(", ") + row + " " + fmt("%.3f", ab->metrics.ndcg_at_10);
        n += "; R@10 " + fmt("%.3f", full->metrics.r_at_10) + " vs rule " + fmt("%.3f", rule->metrics.r_at_10);
        c.note(n);
    }
    return c;
}

Check engagement(const std::vector<SeedRun>& runs) {
    Check c;
    for (const auto& r : runs) {
        const auto* full = r.result.report.find("full");
        const auto* rule = r.result.report.find("rule-based");
        if (!full || !rule) {
            c.expect(false, "missing rows");
            continue;
        }
        c.expect(full->metrics.ctr > rule->metrics.ctr, "seed " + std::to_string(r.seed) + " CTR not above rule");
        c.note("seed " + std::to_string(r.seed) + " CTR " + fmt("%.4f", full->metrics.ctr) + " vs " +
               fmt("%.4f", rule->metrics.ctr));
    }
    return c;
}

// ---- service ----

double p95(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[static_cast<std::size_t>(std::ceil(0.95 * v.size())) - 1];
}

Check service_contracts(const Environment& env, const PolicyParams& params) {
    using nlohmann::json;
    Check c;
    auto post = [](FacetService& s, const std::string& path, const json& body) {
        return dispatch(s, {"POST", path, body.dump(), {}});
    };
    std::string query;
    for (const auto& [cat, attrs] : env.kg().categories) {
        query = cat;
        break;
    }
    {
        FacetService s(env, params);
        auto a = post(s, "/v1/facets", {{"session_id", "a"}, {"query", query}});
        auto b = post(s, "/v1/facets", {{"session_id", "a"}, {"query", query}});
        auto ja = json::parse(a.body), jb = json::parse(b.body);
        c.expect(ja["cache"] == "miss" && jb["cache"] == "hit" && ja["facets"].dump() == jb["facets"].dump(),
                 "cache hit on repeat");
        auto other = post(s, "/v1/facets", {{"session_id", "b"}, {"query", query}});
        c.expect(json::parse(other.body)["cache"] == "miss", "cross-session isolation");
        const auto& f = ja["facets"][0];
        auto sel = post(s, "/v1/select", {{"session_id", "a"}, {"facet_name", f["name"]}, {"value", f["values"][0]}});
        c.expect(sel.status == 200, "select status");
        auto again = post(s, "/v1/facets", {{"session_id", "a"}, {"query", query}});
        c.expect(json::parse(again.body)["cache"] == "miss", "invalidation after select");

        s.facets("bool", query);
        s.set_mode("bool", "boolean");
        auto last = s.session("bool")->last_facets;
        const std::vector<FacetSelection> chosen{{last[0].name, last[0].values[0]}};
        auto reply = s.select("bool", chosen[0].name, chosen[0].value);
        std::vector<std::string> got;
        for (const auto& r : reply.results) got.push_back(r.doc_id);
        c.expect(got == oracle::filter_by_scan(search(env.index(), query, kDefaultResultDepth), env.catalog(), chosen),
                 "boolean mode equals filter oracle");
    }
    auto transcript = [&] {
        FacetService s(env, params);
        std::string out;
        auto a = post(s, "/v1/facets", {{"session_id", "r"}, {"query", query}});
        out += a.body;
        auto f = json::parse(a.body)["facets"][0];
        out += post(s, "/v1/select", {{"session_id", "r"}, {"facet_name", f["name"]}, {"value", f["values"][0]}}).body;
        out += dispatch(s, {"GET", "/v1/search", "", {{"q", query}, {"k", "20"}}}).body;
        return out;
    };
    c.expect(transcript() == transcript(), "restart determinism");

    // Latency: every facets call is a cache miss (fresh session each time).
    genfacet::log::set_threshold(genfacet::log::Level::warn);
    FacetService s(env, params);
    std::vector<std::string> queries;
    for (const auto& [cat, attrs] : env.kg().categories) {
        queries.push_back(cat);
        for (const auto& [a, info] : attrs) queries.push_back(info.values.front() + " " + cat);
    }
    std::vector<double> facet_ms, select_ms;
    for (std::size_t i = 0; i < 300; ++i) {
        const std::string sid = "lat" + std::to_string(i);
        auto t = clk::now();
        auto r = s.facets(sid, queries[i % queries.size()]);
        facet_ms.push_back(1e3 * seconds_since(t));
        auto offer = std::find_if(r.facets.begin(), r.facets.end(), [](const Facet& f) { return !f.values.empty(); });
        if (offer == r.facets.end()) continue;
        t = clk::now();
        s.select(sid, offer->name, offer->values.front());
        select_ms.push_back(1e3 * seconds_since(t));
    }
    const double pf = p95(facet_ms), ps = select_ms.empty() ? 1e9 : p95(select_ms);
    c.expect(pf < 50.0, "facets p95 " + fmt("%.1f ms", pf));
    c.expect(ps < 20.0, "select p95 " + fmt("%.1f ms", ps));
    c.note("p95 facets " + fmt("%.2f ms", pf) + ", select " + fmt("%.2f ms", ps) + " on " +
           std::to_string(env.catalog().size()) + " products");
    return c;
}

// ---- determinism ----

Check determinism() {
    Check c;
    CatalogConfig cc;
    cc.num_products = 2000;
    cc.seed = 41;
    const auto e1 = Environment::synthetic(cc), e2 = Environment::synthetic(cc);
    c.expect(catalog_to_jsonl(e1.catalog()) == catalog_to_jsonl(e2.catalog()), "catalog");
    c.expect(e1.kg() == e2.kg(), "knowledge graph");
    c.expect(e1.index().serialize() == e2.index().serialize(), "index");

    const auto d1 = build_distill_dataset(e1, 60, 5), d2 = build_distill_dataset(e2, 60, 5);
    const auto tmp = std::filesystem::temp_directory_path();
    save_distill_dataset(d1, tmp / "acceptance_d1.jsonl");
    save_distill_dataset(d2, tmp / "acceptance_d2.jsonl");
    c.expect(read_text_file(tmp / "acceptance_d1.jsonl") == read_text_file(tmp / "acceptance_d2.jsonl"),
             "distillation");
    SftConfig sc;
    sc.iterations = 10;
    const auto sft1 = train_sft(PolicyParams{}, d1, sc).params, sft2 = train_sft(PolicyParams{}, d2, sc).params;
    c.expect(sft1 == sft2, "sft");

    const auto h1 = harvest_flywheel(e1, RulePipeline(), 100, 3, SimulatorConfig{}, 1);
    const auto h2 = harvest_flywheel(e2, RulePipeline(), 100, 3, SimulatorConfig{}, 4);
    const auto ctr1 = fit_flywheel({h1}), ctr2 = fit_flywheel({h2});
    c.expect(ctr1 == ctr2, "click model across thread counts");

    TrainConfig tc;
    tc.iterations = 10;
    tc.seed = 8;
    GrpoEnvironment g1{e1, ctr1, RewardConfig{}, SimulatorConfig{}}, g2{e2, ctr2, RewardConfig{}, SimulatorConfig{}};
    tc.threads = 1;
    const auto r1 = train_grpo(sft1, g1, tc);
    tc.threads = 4;
    const auto r2 = train_grpo(sft1, g2, tc);
    c.expect(r1.params == r2.params && training_log_jsonl(r1.log) == training_log_jsonl(r2.log),
             "group training across thread counts");

    const auto b1 = build_benchmark(e1, 100, 9), b2 = build_benchmark(e2, 100, 9);
    SuiteOptions o1, o4;
    o1.seed = o4.seed = 10;
    o1.threads = 1;
    o4.threads = 4;
    const TrainedArtifacts art{r1.params, sft1, sft1};
    c.expect(run_ablation_suite(e1, b1, art, o1).to_json() == run_ablation_suite(e2, b2, art, o4).to_json(),
             "evaluation across thread counts");
    c.note("catalog, index, distillation, SFT, click model, group training and evaluation bit-identical");
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    unsigned threads = 0;
    std::vector<std::string> only;
    app.add_option("--threads", threads, "worker threads, 0 = all cores");
    app.add_option("--only", only, "run a subset")->delimiter(',');
    CLI11_PARSE(app, argc, argv);
    genfacet::log::set_threshold(genfacet::log::Level::warn);
    auto wanted = [&](const std::string& n) { return only.empty() || std::count(only.begin(), only.end(), n); };
    bool all_pass = true;
    auto run = [&](const std::string& name, double limit, const std::function<Check()>& f) {
        const auto t = clk::now();
        Check c = f();
        const double secs = seconds_since(t);
        report(name, c, secs, limit);
        all_pass = all_pass && c.failures.empty() && (limit <= 0 || secs < limit);
    };

    if (wanted("metric-oracles")) run("metric-oracles", 10, metric_oracles);
    if (wanted("probability-soundness")) run("probability-soundness", 60, probability_soundness);
    if (wanted("grpo-numerics"))
        run("grpo-numerics", 60, [] {
            CatalogConfig cc;
            cc.num_products = 2000;
            cc.seed = 17;
            return grpo_numerics(build_distill_dataset(Environment::synthetic(cc), 50, 4));
        });

    const bool need_runs = wanted("training-efficacy") || wanted("table1-directional") ||
                           wanted("closed-loop-engagement") || wanted("service-contracts");
    std::vector<SeedRun> runs;
    double experiment_secs = 0.0;
    if (need_runs)
        for (std::uint64_t seed : {1, 2, 3}) {
            runs.push_back(run_seed(seed, threads));
            experiment_secs += runs.back().seconds;
            std::fprintf(stderr, "seed %llu done in %.1f s\n", static_cast<unsigned long long>(seed),
                         runs.back().seconds);
        }
    // The three criteria below share the seed runs; each is charged their full time.
    auto shared = [&](const std::string& name, double limit, const std::function<Check()>& f) {
        const auto t = clk::now();
        Check c = f();
        const double secs = experiment_secs + seconds_since(t);
        report(name, c, secs, limit);
        all_pass = all_pass && c.failures.empty() && (limit <= 0 || secs < limit);
    };
    if (wanted("training-efficacy")) shared("training-efficacy", 600, [&] { return training_efficacy(runs); });
    if (wanted("table1-directional")) shared("table1-directional", 900, [&] { return table_one(runs); });
    if (wanted("closed-loop-engagement")) shared("closed-loop-engagement", 900, [&] { return engagement(runs); });
    if (wanted("service-contracts"))
        run("service-contracts", 0, [&] {
            CatalogConfig cc;
            cc.seed = 1;  // the 10,000-product seed-1 catalog the first run trained on
            return service_contracts(Environment::synthetic(cc), runs.front().result.grpo.params);
        });
    if (wanted("determinism")) run("determinism", 0, determinism);
    return all_pass ? 0 : 1;
}
