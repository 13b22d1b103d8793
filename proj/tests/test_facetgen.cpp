#include <gtest/gtest.h>

#include <cmath>

#include "genfacet/facetgen.hpp"
#include "genfacet/policy.hpp"
#include "genfacet/rng.hpp"
#include "oracles.hpp"

using namespace genfacet;

namespace {

FeatureMatrix random_rows(Rng& rng, std::size_t n, std::size_t d) {
    FeatureMatrix rows(n, std::vector<double>(d));
    for (auto& r : rows)
        for (auto& x : r) x = rng.uniform(-1.0, 1.0);
    return rows;
}

LinearPolicy random_policy(Rng& rng, std::size_t d, double scale = 2.0) {
    LinearPolicy p{std::vector<double>(d), 1.0};
    for (auto& w : p.weights) w = rng.uniform(-scale, scale);
    return p;
}

std::vector<CandidateFacet> named_candidates(std::size_t n) {
    std::vector<CandidateFacet> out;
    for (std::size_t i = 0; i < n; ++i) {
        CandidateFacet c{"a" + std::to_string(i), {"x"}, std::vector<double>(kFacetFeatureDim, 0.0)};
        c.features[kFeatPrior] = 0.3 * double(i);
        c.features[kFeatBias] = 1.0;
        out.push_back(c);
    }
    return out;
}

/// Two products per attribute layout; used for the Gini and candidate tests.
struct Toy {
    KnowledgeGraph kg;
    Catalog catalog;
    InvertedIndex index;
};

Toy toy() {
    Toy t;
    t.kg.categories["dress"] = {{"color", {{"red", "blue"}, 0.9}}, {"material", {{"silk", "wool"}, 0.4}}};
    std::vector<Product> ps;
    const char* colors[] = {"red", "blue"};
    const char* mats[] = {"silk", "wool"};
    for (int i = 0; i < 10; ++i)
        ps.push_back({"p" + std::to_string(i), "dress", "dress",
                      {{"color", colors[i % 2]}, {"material", mats[i < 8 ? 0 : 1]}}, 0.5});
    t.catalog = Catalog(ps);
    t.index = InvertedIndex::from_documents([&] {
        std::vector<std::pair<std::string, std::string>> d;
        for (const auto& p : ps) d.emplace_back(p.id, p.title + " " + p.attrs.at("color") + " " + p.attrs.at("material"));
        return d;
    }());
    return t;
}

}  // namespace

TEST(Candidates, OnePerGraphAttribute) {
    auto t = toy();
    SessionContext ctx;
    ctx.query = "dress";
    ctx.kg_view = t.kg.categories.at("dress");
    auto c = mine_candidates(ctx, t.kg, t.index, t.catalog);
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c[0].name, "color");
    EXPECT_EQ(c[1].name, "material");
    for (const auto& x : c) EXPECT_EQ(x.features.size(), kFacetFeatureDim);
}

TEST(Candidates, EmptyContext) {
    auto t = toy();
    EXPECT_TRUE(mine_candidates(SessionContext{}, t.kg, t.index, t.catalog).empty());
}

TEST(Candidates, LexicalOverlapFeature) {
    auto t = toy();
    SessionContext ctx;
    ctx.query = "red dress";
    ctx.kg_view = t.kg.categories.at("dress");
    auto c = mine_candidates(ctx, t.kg, t.index, t.catalog);
    ASSERT_EQ(c[0].name, "color");
    EXPECT_DOUBLE_EQ(c[0].features[kFeatLexical], 0.5);
    EXPECT_DOUBLE_EQ(c[1].features[kFeatLexical], 0.0);
}

TEST(Candidates, TrendTermAddsAttribute) {
    auto t = toy();
    t.kg.categories["coat"] = {{"pattern", {{"plaid", "solid"}, 0.2}}};
    SessionContext ctx;
    ctx.query = "dress";
    ctx.kg_view = t.kg.categories.at("dress");
    ctx.web_trends = {{"plaid everything", 0.8}};
    auto c = mine_candidates(ctx, t.kg, t.index, t.catalog);
    ASSERT_EQ(c.size(), 3u);
    EXPECT_EQ(c[2].name, "pattern");
    EXPECT_DOUBLE_EQ(c[2].features[kFeatTrend], 0.8);
    EXPECT_DOUBLE_EQ(c[2].features[kFeatPrior], 0.0);
}

TEST(Candidates, EntropyFeatureMatchesHandCount) {
    auto t = toy();
    auto results = search(t.index, "dress", 100);
    ASSERT_EQ(results.size(), 10u);
    // color 5/5 over 2 values: ln 2 / ln 3.
    EXPECT_NEAR(normalized_value_entropy(results, t.catalog, "color", 2), std::log(2.0) / std::log(3.0), 1e-12);
    double h = -(0.8 * std::log(0.8) + 0.2 * std::log(0.2));
    EXPECT_NEAR(normalized_value_entropy(results, t.catalog, "material", 2), h / std::log(3.0), 1e-12);
}

TEST(PlackettLuce, UniformPairLogProb) {
    auto c = named_candidates(3);
    for (auto& x : c) x.features.assign(kFacetFeatureDim, 0.0);
    auto p = zero_facet_params();
    Rng rng(1);
    auto s = sample_facet_list(p, c, 2, rng);
    EXPECT_NEAR(s.log_prob, std::log(1.0 / 3) + std::log(0.5), 1e-12);
    EXPECT_NEAR(s.log_prob, -1.791759, 1e-6);
    EXPECT_NEAR(list_logprob(p, c, s.facets), -1.791759, 1e-6);
}

TEST(PlackettLuce, SingleCandidate) {
    auto c = named_candidates(1);
    Rng rng(1);
    auto s = sample_facet_list(zero_facet_params(), c, 1, rng);
    ASSERT_EQ(s.facets.size(), 1u);
    EXPECT_EQ(s.log_prob, 0.0);
}

TEST(PlackettLuce, KLargerThanCandidatesThrows) {
    auto c = named_candidates(2);
    Rng rng(1);
    EXPECT_THROW(sample_facet_list(zero_facet_params(), c, 3, rng), std::invalid_argument);
}

TEST(PlackettLuce, FirstPickFrequenciesMatchSoftmax) {
    FeatureMatrix rows{{0.1}, {0.7}, {-0.4}, {1.2}};
    LinearPolicy p{{1.0}, 1.0};
    Rng rng(99);
    const int n = 100000;
    std::vector<int> counts(4, 0);
    for (int i = 0; i < n; ++i) ++counts[pl_sample(p, rows, 1, rng)[0]];
    auto s = oracle::scores(p, rows);
    double z = 0.0;
    for (double x : s) z += std::exp(x);
    for (int i = 0; i < 4; ++i) {
        double q = std::exp(s[i]) / z;
        double sigma = std::sqrt(n * q * (1 - q));
        EXPECT_LT(std::abs(counts[i] - n * q), 3 * sigma) << i;
    }
}

TEST(PlackettLuce, RecomputedLogProbMatchesSampler) {
    Rng rng(4);
    auto c = named_candidates(6);
    for (auto& x : c)
        for (auto& f : x.features) f = rng.uniform(-1, 1);
    auto p = random_policy(rng, kFacetFeatureDim);
    for (int i = 0; i < 50; ++i) {
        auto s = sample_facet_list(p, c, 4, rng);
        EXPECT_NEAR(list_logprob(p, c, s.facets), s.log_prob, 1e-12);
    }
}

TEST(PlackettLuce, UnknownListMemberThrows) {
    auto c = named_candidates(3);
    FacetList bad{Facet{"nope", {}, 0.0, {}}};
    EXPECT_THROW(list_logprob(zero_facet_params(), c, bad), std::invalid_argument);
}

TEST(PlackettLuce, EnumerationSumsToOne) {
    Rng rng(12);
    for (std::size_t n = 1; n <= 6; ++n)
        for (std::size_t k = 1; k <= std::min<std::size_t>(3, n); ++k) {
            auto rows = random_rows(rng, n, 4);
            auto p = random_policy(rng, 4);
            double total = 0.0;
            for (const auto& o : oracle::ordered_subsets(n, k)) {
                total += std::exp(pl_log_prob(p, rows, o));
                EXPECT_NEAR(std::exp(pl_log_prob(p, rows, o)), oracle::pl_prob(oracle::scores(p, rows), o), 1e-12);
            }
            EXPECT_NEAR(total, 1.0, 1e-9) << n << " " << k;
        }
}

TEST(PlackettLuce, ShiftInvariance) {
    Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        auto rows = random_rows(rng, 5, 3);
        auto p = random_policy(rng, 3);
        // A constant column with weight c shifts every score by the same amount.
        auto shifted_rows = rows;
        for (auto& r : shifted_rows) r.push_back(1.0);
        auto q = p;
        q.weights.push_back(rng.uniform(-50, 50));
        std::vector<std::size_t> o{2, 0, 4};
        EXPECT_NEAR(pl_log_prob(p, rows, o), pl_log_prob(q, shifted_rows, o), 1e-12);
    }
}

TEST(PlackettLuce, ArgmaxTieKeepsInputOrder) {
    FeatureMatrix rows{{1.0}, {2.0}, {2.0}, {0.0}};
    EXPECT_EQ(pl_argmax(LinearPolicy{{1.0}, 1.0}, rows, 3), (std::vector<std::size_t>{1, 2, 0}));
}

TEST(PlackettLuce, ValidateRejectsBadTemperature) {
    EXPECT_THROW((LinearPolicy{{1.0}, 0.0}).validate(), std::invalid_argument);
    EXPECT_THROW((LinearPolicy{{NAN}, 1.0}).validate(), std::invalid_argument);
}

TEST(RankFacets, DeterministicTopK) {
    auto c = named_candidates(5);
    auto p = zero_facet_params();
    p.weights[kFeatPrior] = 1.0;
    auto top = rank_facets(p, c, 3);
    ASSERT_EQ(top.size(), 3u);
    EXPECT_EQ(top[0].name, "a4");
    EXPECT_EQ(top[2].name, "a2");
    EXPECT_EQ(rank_facets(p, c, 3), top);
}

TEST(RuleBased, PriorOrderAndFallbacks) {
    KnowledgeGraph kg;
    kg.categories["dress"] = {{"color", {{"red"}, 0.4}}, {"size", {{"s"}, 0.9}}};
    kg.categories["lamp"] = {{"b", {{"x"}, 0.5}}, {"a", {{"y"}, 0.5}}};
    auto f = rule_based_facets(kg, "dress", 5);
    ASSERT_EQ(f.size(), 2u);
    EXPECT_EQ(f[0].name, "size");
    EXPECT_EQ(f[1].name, "color");
    EXPECT_TRUE(rule_based_facets(kg, "boat", 5).empty());
    auto tie = rule_based_facets(kg, "lamp", 5);
    EXPECT_EQ(tie[0].name, "a");
}

TEST(Gini, SingleValueIsZeroAndLast) {
    Catalog c({{"a", "x", "dress", {{"color", "red"}, {"material", "silk"}}, 0.1},
               {"b", "x", "dress", {{"color", "blue"}, {"material", "silk"}}, 0.1}});
    std::vector<RankedResult> two{{"a", 1}, {"b", 1}};
    EXPECT_DOUBLE_EQ(gini_impurity(two, c, "material"), 0.0);
    EXPECT_DOUBLE_EQ(gini_impurity(two, c, "color"), 0.5);
    auto ranked = gini_rank_facets(two, c, 5);
    EXPECT_EQ(ranked.back().name, "material");
    EXPECT_TRUE(gini_rank_facets({}, c, 5).empty());
}

TEST(Gini, RankingMatchesBruteForce) {
    Rng rng(6);
    std::vector<Product> ps;
    const std::vector<std::string> attrs{"a", "b", "c", "d", "e"};
    for (int i = 0; i < 10; ++i) {
        Product p{"d" + std::to_string(i), "t", "x", {}, 0.5};
        for (const auto& a : attrs)
            if (rng.bernoulli(0.8)) p.attrs[a] = "v" + std::to_string(rng.below(1 + (a[0] - 'a')));
        ps.push_back(p);
    }
    Catalog cat(ps);
    std::vector<RankedResult> res;
    for (const auto& p : ps) res.push_back({p.id, 1.0});
    std::vector<std::pair<double, std::string>> expect;
    for (const auto& a : attrs) {
        std::map<std::string, int> cnt;
        int n = 0;
        for (const auto& p : ps)
            if (p.attrs.count(a)) ++cnt[p.attrs.at(a)], ++n;
        if (!n) continue;
        double g = 1.0;
        for (auto& [_, c] : cnt) g -= double(c) * c / (double(n) * n);
        expect.emplace_back(-g, a);
    }
    std::sort(expect.begin(), expect.end());
    auto got = gini_rank_facets(res, cat, 10);
    ASSERT_EQ(got.size(), expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_EQ(got[i].name, expect[i].second);
        EXPECT_NEAR(got[i].score, -expect[i].first, 1e-12);
    }
}

TEST(LlmFacets, ParsesAndGuards) {
    KnowledgeGraph kg;
    kg.categories["dress"] = {{"color", {{"red", "blue"}, 1}}, {"size", {{"s", "m"}, 1}}, {"length", {{"mini"}, 1}}};
    auto ok = parse_llm_facets(
        R"([{"name":"color","values":["red"]},{"name":"size","values":["m"]},{"name":"length","values":[]}])", kg);
    EXPECT_EQ(ok.facets.size(), 3u);
    EXPECT_EQ(ok.dropped, 0u);
    auto guarded = parse_llm_facets(
        "Sure!\n```json\n{\"facets\":[{\"name\":\"color\"},{\"name\":\"vibe\"},{\"name\":\"aura\"}]}\n```", kg);
    EXPECT_EQ(guarded.facets.size(), 1u);
    EXPECT_EQ(guarded.dropped, 2u);
    EXPECT_THROW(parse_llm_facets("", kg), LlmParseError);
    try {
        parse_llm_facets("not json at all", kg);
        FAIL();
    } catch (const LlmParseError& e) {
        EXPECT_EQ(e.raw(), "not json at all");
    }
}
