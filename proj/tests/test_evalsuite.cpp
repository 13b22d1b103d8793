#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "genfacet/evalsuite.hpp"
#include "genfacet/rng.hpp"
#include "oracles.hpp"

using namespace genfacet;

namespace {

const std::vector<BenchmarkSession>& small_bench() {
    static const auto b = build_benchmark(fixture::small_env(), 60, 5);
    return b;
}

TrainedArtifacts cheap_artifacts() {
    TrainedArtifacts a;
    a.full = fixture::trained_params();
    a.sft_only = fixture::trained_params();
    a.separate = PolicyParams{};
    return a;
}

SuiteOptions opts(std::vector<std::string> rows = {}) {
    SuiteOptions o;
    o.seed = 6;
    o.threads = 1;
    o.rows = std::move(rows);
    return o;
}

}  // namespace

TEST(Metrics, Definitions) {
    std::vector<std::string> gen, gold;
    for (int i = 0; i < 10; ++i) gen.push_back(i < 7 ? "g" + std::to_string(i) : "x" + std::to_string(i));
    for (int i = 0; i < 20; ++i) gold.push_back("g" + std::to_string(i));
    EXPECT_DOUBLE_EQ(precision_at_k(gen, gold, 10), 0.7);
    EXPECT_DOUBLE_EQ(recall_at_k(gen, gold, 10), 0.35);
    std::vector<std::string> same{"a", "b", "c"};
    EXPECT_DOUBLE_EQ(precision_at_k(same, same, 3), 1.0);
    EXPECT_DOUBLE_EQ(recall_at_k(same, same, 3), 1.0);
    EXPECT_THROW(recall_at_k(same, {}, 3), std::invalid_argument);
    EXPECT_THROW(precision_at_k(same, same, 0), std::invalid_argument);
}

TEST(Metrics, NdcgWorkedExample) {
    std::map<std::string, double> grades{{"a", 1}, {"c", 1}};
    EXPECT_NEAR(ndcg_at_k({"a", "b", "c"}, grades, 10), 0.919721, 1e-6);
    EXPECT_NEAR(ndcg_at_k({"a", "b", "c"}, grades, 10), 1.5 / (1 + 1 / std::log2(3.0)), 1e-12);
    EXPECT_DOUBLE_EQ(ndcg_at_k({"a", "c", "b"}, grades, 10), 1.0);
    EXPECT_DOUBLE_EQ(ndcg_at_k({"a", "c"}, {}, 10), 0.0);
}

TEST(Metrics, MatchBruteForceOnRandomCases) {
    Rng rng(123);
    auto pick = [&](std::size_t n, std::size_t vocab) {
        std::vector<std::string> v;
        for (std::size_t i = 0; i < n; ++i) v.push_back("t" + std::to_string(rng.below(vocab)));
        return v;
    };
    for (int t = 0; t < 1000; ++t) {
        const std::size_t vocab = 3 + rng.below(30), k = 1 + rng.below(12);
        auto gen = pick(rng.below(15), vocab);
        // Generated facet lists carry no duplicate names.
        std::sort(gen.begin(), gen.end());
        gen.erase(std::unique(gen.begin(), gen.end()), gen.end());
        rng.shuffle(gen);
        auto gold = pick(1 + rng.below(10), vocab);
        std::sort(gold.begin(), gold.end());
        gold.erase(std::unique(gold.begin(), gold.end()), gold.end());
        EXPECT_NEAR(precision_at_k(gen, gold, k), oracle::precision(gen, gold, k), 1e-9);
        EXPECT_NEAR(recall_at_k(gen, gold, k), oracle::recall(gen, gold, k), 1e-9);
        // Hit counts are integers.
        const double hits = precision_at_k(gen, gold, k) * k;
        EXPECT_NEAR(hits, std::round(hits), 1e-9);

        std::map<std::string, double> grades;
        for (const auto& d : pick(rng.below(8), vocab)) grades[d] = rng.bernoulli(0.3) ? 2.0 : 1.0;
        if (rng.bernoulli(0.1)) grades.clear();
        auto ranked = pick(rng.below(15), vocab);
        EXPECT_NEAR(ndcg_at_k(ranked, grades, k), oracle::ndcg(ranked, grades, k), 1e-9);
    }
}

TEST(Benchmark, EmptyAndDeterministic) {
    EXPECT_TRUE(build_benchmark(fixture::small_env(), 0, 1).empty());
    auto a = build_benchmark(fixture::small_env(), 20, 8);
    auto b = build_benchmark(fixture::small_env(), 20, 8);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].spec.intent, b[i].spec.intent);
        EXPECT_EQ(a[i].gold_facets, b[i].gold_facets);
        EXPECT_EQ(a[i].gold_rewrite, b[i].gold_rewrite);
        EXPECT_EQ(a[i].grades, b[i].grades);
        EXPECT_FALSE(a[i].gold_facets.empty());
    }
}

TEST(Benchmark, GoldRewriteNoWorseThanHardFilter) {
    const auto& env = fixture::small_env();
    auto bench = build_benchmark(env, 100, 11);
    RewardConfig rc;
    for (const auto& b : bench) {
        const auto& in = b.spec.intent;
        ASSERT_FALSE(b.gold_rewrite.empty());
        const FacetSelection sel{b.gold_facets[0], in.constraints.at(b.gold_facets[0])};
        // Same retrieval budget as r_query: the filter sees the static top k_eval.
        auto filtered = boolean_filter(env.index(), env.catalog(), in.category, sel, rc.k_eval);
        EXPECT_GE(r_query(rc, env.index(), b.gold_rewrite, in),
                  results_utility(rc, env.index(), filtered, in.category, in) - 1e-12)
            << b.gold_rewrite;
    }
}

TEST(Report, DeltaMatchesHandComputation) {
    Report r;
    r.baseline = "rule-based";
    SystemMetrics base, ours;
    base.r_at_10 = 0.584;
    ours.r_at_10 = 0.847;
    base.ndcg_at_10 = 0.5;
    r.rows = {{"rule-based", base, {}}, {"full", ours, {}}};
    fill_deltas(r);
    EXPECT_NEAR(*r.rows[1].delta.at("r_at_10"), (0.847 - 0.584) / 0.584, 1e-12);
    EXPECT_DOUBLE_EQ(*r.rows[1].delta.at("ndcg_at_10"), -1.0);
    EXPECT_FALSE(r.rows[1].delta.at("p_at_10"));  // zero base
    EXPECT_NE(r.to_text().find("0.8470 (+45.0%)"), std::string::npos) << r.to_text();
    EXPECT_NE(r.to_text().find("(n/a)"), std::string::npos);
    r.baseline = "gini";
    EXPECT_THROW(fill_deltas(r), std::invalid_argument);
}

TEST(Report, RowNames) {
    ASSERT_EQ(ablation_rows().size(), 7u);
    EXPECT_EQ(resolve_ablation_row("w/o GRPO"), "wo-grpo");
    EXPECT_EQ(resolve_ablation_row("wo-grpo"), "wo-grpo");
    EXPECT_FALSE(resolve_ablation_row("fancy"));
}

TEST(Suite, MissingArtifactNamesTheRow) {
    TrainedArtifacts a = cheap_artifacts();
    a.separate.reset();
    try {
        run_ablation_suite(fixture::small_env(), small_bench(), a, opts({"w/o multi-task SFT"}));
        FAIL() << "expected an error";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("w/o multi-task SFT"), std::string::npos) << e.what();
    }
    EXPECT_THROW(run_ablation_suite(fixture::small_env(), small_bench(), a, opts({"bogus"})), std::invalid_argument);
}

TEST(Suite, AllRowsOnSharedSessions) {
    auto report = run_ablation_suite(fixture::small_env(), small_bench(), cheap_artifacts(), opts());
    ASSERT_EQ(report.rows.size(), 7u);
    for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(report.rows[i].system, ablation_rows()[i].display);
    const auto* full = report.find("full");
    const auto* boolean = report.find("w/o rewriting");
    // Same facet policy, same first-turn streams: facet metrics agree exactly.
    EXPECT_EQ(full->metrics.p_at_10, boolean->metrics.p_at_10);
    EXPECT_EQ(full->metrics.r_at_10, boolean->metrics.r_at_10);
    // Identical parameters give identical rows.
    EXPECT_EQ(full->metrics.ndcg_at_10, report.find("w/o GRPO")->metrics.ndcg_at_10);
    for (const auto& r : report.rows) {
        EXPECT_GE(r.metrics.ndcg_at_10, 0.0);
        EXPECT_LE(r.metrics.ndcg_at_10, 1.0);
    }
    EXPECT_EQ(report.find("rule-based")->delta.at("p_at_10"), 0.0);
    auto subset = run_ablation_suite(fixture::small_env(), small_bench(), cheap_artifacts(), opts({"full"}));
    ASSERT_EQ(subset.rows.size(), 2u);
    EXPECT_EQ(subset.rows[1].metrics.ndcg_at_10, full->metrics.ndcg_at_10);
}

TEST(Suite, RuleRowIgnoresUserContext) {
    auto bench = small_bench();
    auto a = evaluate_pipeline(fixture::small_env(), RulePipeline(), bench, opts());
    Rng rng(3);
    for (auto& b : bench) {
        b.spec.user.profile = {{"tag" + std::to_string(rng.below(100)), 1.0}};
        b.spec.user.behaviors.clear();
    }
    auto b = evaluate_pipeline(fixture::small_env(), RulePipeline(), bench, opts());
    EXPECT_EQ(a.p_at_10, b.p_at_10);
    EXPECT_EQ(a.ndcg_at_10, b.ndcg_at_10);
    EXPECT_EQ(a.ctr, b.ctr);
}

TEST(Suite, ThreadCountDoesNotChangeReport) {
    auto o1 = opts(), o3 = opts();
    o3.threads = 3;
    auto a = run_ablation_suite(fixture::small_env(), small_bench(), cheap_artifacts(), o1);
    auto b = run_ablation_suite(fixture::small_env(), small_bench(), cheap_artifacts(), o3);
    EXPECT_EQ(a.to_json(), b.to_json());
}
