#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "genfacet/catalog.hpp"
#include "genfacet/lexindex.hpp"
#include "genfacet/rng.hpp"
#include "genfacet/text.hpp"
#include "oracles.hpp"

using namespace genfacet;

namespace {

std::vector<std::string> ids(const std::vector<RankedResult>& rs) {
    std::vector<std::string> out;
    for (const auto& r : rs) out.push_back(r.doc_id);
    return out;
}

const GeneratedCatalog& thousand() {
    static const GeneratedCatalog g = [] {
        CatalogConfig cfg;
        cfg.num_products = 1000;
        cfg.num_categories = 6;
        cfg.seed = 21;
        return generate_catalog(cfg);
    }();
    return g;
}

}  // namespace

TEST(Tokenize, Examples) {
    EXPECT_EQ(tokenize("Red Dress"), (std::vector<std::string>{"red", "dress"}));
    EXPECT_TRUE(tokenize("").empty());
    EXPECT_EQ(tokenize("dopamine-dressing 2024"), (std::vector<std::string>{"dopamine", "dressing", "2024"}));
}

TEST(ParseQuery, SoftTermsAndDuplicates) {
    auto q = parse_query("red ~red ~wine dress", 0.25);
    ASSERT_EQ(q.size(), 3u);
    EXPECT_EQ(q[0].term, "red");
    EXPECT_DOUBLE_EQ(q[0].weight, 1.0);
    EXPECT_EQ(q[1].term, "wine");
    EXPECT_DOUBLE_EQ(q[1].weight, 0.25);
}

TEST(InvertedIndex, EmptyCatalog) {
    auto idx = build_index(Catalog{});
    EXPECT_EQ(idx.doc_count(), 0u);
    EXPECT_TRUE(search(idx, "red", 10).empty());
}

TEST(InvertedIndex, SingleDocument) {
    auto idx = InvertedIndex::from_documents({{"p", "red dress"}});
    ASSERT_NE(idx.postings("red"), nullptr);
    EXPECT_EQ(*idx.postings("red"), (std::vector<Posting>{{0, 1}}));
    EXPECT_EQ(*idx.postings("dress"), (std::vector<Posting>{{0, 1}}));
    EXPECT_EQ(idx.all_postings().size(), 2u);
    EXPECT_EQ(idx.doc_ids(), (std::vector<std::string>{"p"}));
}

TEST(InvertedIndex, PostingsMatchScan) {
    const auto& g = thousand();
    auto idx = build_index(g.catalog);
    std::vector<std::string> vocab;
    for (const auto& [t, _] : idx.all_postings()) vocab.push_back(t);
    std::sort(vocab.begin(), vocab.end());
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        const auto& term = vocab[rng.below(vocab.size())];
        std::map<std::string, std::size_t> got;
        for (const auto& p : *idx.postings(term)) got[idx.doc_ids()[p.doc]] = p.tf;
        EXPECT_EQ(got, oracle::scan_postings(g.catalog, term)) << term;
    }
}

TEST(Search, OkapiWorkedExample) {
    auto idx = InvertedIndex::from_documents({{"d1", "red dress"}, {"d2", "blue dress"}, {"d3", "red shoes"}});
    auto rs = search(idx, "red", 3);
    ASSERT_EQ(rs.size(), 2u);
    EXPECT_EQ(rs[0].doc_id, "d1");
    EXPECT_EQ(rs[1].doc_id, "d3");
    EXPECT_NEAR(rs[0].score, std::log(1.6), 1e-12);
    EXPECT_NEAR(rs[1].score, 0.470004, 1e-6);
}

TEST(Search, AbsentTermAndZeroK) {
    auto idx = InvertedIndex::from_documents({{"d1", "red dress"}});
    EXPECT_TRUE(search(idx, "submarine", 3).empty());
    EXPECT_TRUE(search(idx, "red", 0).empty());
    EXPECT_TRUE(search(idx, "", 3).empty());
}

TEST(Search, SoftTermsRankBelowHardTerms) {
    auto idx = InvertedIndex::from_documents({{"a", "wine dress"}, {"b", "red dress"}, {"c", "shoes"}});
    auto rs = search(idx, "dress red ~wine", 3);
    ASSERT_EQ(rs.size(), 2u);
    EXPECT_EQ(rs[0].doc_id, "b");
}

TEST(BooleanFilter, ZeroRecall) {
    const auto& g = thousand();
    auto idx = build_index(g.catalog);
    const auto& [cat, attrs] = *g.kg.categories.begin();
    EXPECT_TRUE(boolean_filter(idx, g.catalog, cat, FacetSelection{"no-such-attribute", "x"}, 100).empty());
}

TEST(BooleanFilter, AllSatisfyIsIdentity) {
    auto idx = InvertedIndex::from_documents({{"a", "red dress"}, {"b", "red dress long"}});
    Catalog cat({{"a", "red dress", "dress", {{"color", "red"}}, 0.5}, {"b", "red dress long", "dress", {{"color", "red"}}, 0.5}});
    EXPECT_EQ(boolean_filter(idx, cat, "dress", FacetSelection{"color", "red"}, 10), search(idx, "dress", 10));
}

TEST(BooleanFilter, MatchesIntersectionOracle) {
    const auto& g = thousand();
    auto idx = build_index(g.catalog);
    Rng rng(8);
    std::vector<std::string> cats;
    for (const auto& [c, _] : g.kg.categories) cats.push_back(c);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto& c = cats[rng.below(cats.size())];
        const auto& attrs = g.kg.categories.at(c);
        std::vector<FacetSelection> sel;
        std::size_t n = 1 + rng.below(2);
        for (std::size_t i = 0; i < n; ++i) {
            auto it = attrs.begin();
            std::advance(it, rng.below(attrs.size()));
            sel.push_back({it->first, it->second.values[rng.below(it->second.values.size())]});
        }
        std::size_t k = 1 + rng.below(100);
        std::string q = c;
        if (rng.bernoulli(0.5)) q += " " + sel[0].value;
        auto got = boolean_filter(idx, g.catalog, q, sel, k);
        EXPECT_EQ(ids(got), oracle::filter_by_scan(search(idx, q, k), g.catalog, sel));
    }
}

TEST(InvertedIndex, SerializationRoundTrip) {
    auto idx = build_index(thousand().catalog);
    EXPECT_EQ(InvertedIndex::deserialize(idx.serialize()), idx);
    auto path = std::filesystem::temp_directory_path() / "genfacet_test.gfidx";
    idx.save(path);
    auto back = InvertedIndex::load(path);
    EXPECT_EQ(back, idx);
    EXPECT_EQ(search(back, "red dress", 20), search(idx, "red dress", 20));
    EXPECT_THROW(InvertedIndex::deserialize("garbage"), std::runtime_error);
}
