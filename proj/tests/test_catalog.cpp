#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "genfacet/catalog.hpp"
#include "genfacet/rng.hpp"
#include "genfacet/text.hpp"
#include "oracles.hpp"

using namespace genfacet;

namespace {

KnowledgeGraph three_category_kg() {
    KnowledgeGraph kg;
    kg.categories["dress"] = {{"color", {{"red", "blue"}, 0.9}}, {"length", {{"mini", "maxi"}, 0.5}}};
    kg.categories["shoes"] = {{"color", {{"red", "black"}, 0.7}}, {"heel", {{"flat", "high"}, 0.6}}};
    kg.categories["lamp"] = {{"wattage", {{"low", "bright"}, 0.4}}};
    return kg;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("genfacet_test_" + name);
}

}  // namespace

TEST(Catalog, EmptyProductCountStillBuildsGraph) {
    CatalogConfig cfg;
    cfg.num_products = 0;
    cfg.num_categories = 4;
    auto g = generate_catalog(cfg);
    EXPECT_TRUE(g.catalog.empty());
    EXPECT_EQ(g.kg.categories.size(), 4u);
}

TEST(Catalog, SameConfigSameBytes) {
    CatalogConfig cfg;
    cfg.num_products = 300;
    cfg.seed = 11;
    EXPECT_EQ(catalog_to_jsonl(generate_catalog(cfg).catalog), catalog_to_jsonl(generate_catalog(cfg).catalog));
    EXPECT_EQ(kg_to_json(generate_catalog(cfg).kg), kg_to_json(generate_catalog(cfg).kg));
}

TEST(Catalog, GeneratedProductsPassSchemaOracle) {
    CatalogConfig cfg;
    cfg.num_products = 100;
    cfg.num_categories = 5;
    auto g = generate_catalog(cfg);
    ASSERT_EQ(g.catalog.size(), 100u);
    std::set<std::string> ids;
    for (const auto& p : g.catalog.products()) {
        EXPECT_TRUE(oracle::product_valid(p, g.kg)) << p.id;
        EXPECT_EQ(validate_product(p, g.kg), "");
        ids.insert(p.id);
    }
    EXPECT_EQ(ids.size(), 100u);
}

TEST(Catalog, ValidateProductFlagsBadValue) {
    auto kg = three_category_kg();
    Product p{"p1", "red dress", "dress", {{"color", "green"}}, 0.5};
    EXPECT_NE(validate_product(p, kg), "");
    p.attrs["color"] = "red";
    EXPECT_EQ(validate_product(p, kg), "");
    p.category = "boat";
    EXPECT_NE(validate_product(p, kg), "");
}

TEST(KgSubgraph, NoOverlapIsEmpty) {
    EXPECT_TRUE(kg_subgraph(three_category_kg(), {"submarine"}).empty());
    EXPECT_TRUE(kg_subgraph(three_category_kg(), {}).empty());
}

TEST(KgSubgraph, DirectContainment) {
    KnowledgeGraph kg;
    kg.categories["dress"] = {{"color", {{"red", "blue"}, 1.0}}};
    auto sub = kg_subgraph(kg, tokenize("red dress"));
    ASSERT_EQ(sub.size(), 1u);
    EXPECT_EQ(sub.at("color").values, (std::vector<std::string>{"red", "blue"}));
}

TEST(KgSubgraph, SharedTermUnionMatchesScan) {
    auto kg = three_category_kg();
    auto sub = kg_subgraph(kg, {"red"});
    // Scan: categories that mention "red" anywhere, then the union of their attribute names.
    std::set<std::string> expect;
    for (const auto& [cat, attrs] : kg.categories) {
        bool touches = cat == "red";
        for (const auto& [a, info] : attrs)
            for (const auto& v : info.values) touches = touches || v == "red";
        if (touches)
            for (const auto& [a, info] : attrs) expect.insert(a);
    }
    std::set<std::string> got;
    for (const auto& [a, _] : sub) got.insert(a);
    EXPECT_EQ(got, expect);
    EXPECT_EQ(got, (std::set<std::string>{"color", "heel", "length"}));
    auto colors = sub.at("color").values;
    EXPECT_EQ(std::set<std::string>(colors.begin(), colors.end()), (std::set<std::string>{"red", "blue", "black"}));
}

TEST(KgSubgraph, GeneratedGraphMatchesScan) {
    CatalogConfig cfg;
    cfg.num_products = 0;
    auto kg = generate_catalog(cfg).kg;
    Rng rng(5);
    std::vector<std::string> vocab;
    for (const auto& [cat, attrs] : kg.categories) {
        vocab.push_back(cat);
        for (const auto& [a, info] : attrs)
            for (const auto& v : info.values) vocab.push_back(v);
    }
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::string> q{vocab[rng.below(vocab.size())], vocab[rng.below(vocab.size())]};
        std::set<std::string> expect;
        for (const auto& [cat, attrs] : kg.categories) {
            bool touches = std::find(q.begin(), q.end(), cat) != q.end();
            for (const auto& [a, info] : attrs)
                for (const auto& v : info.values) touches = touches || std::find(q.begin(), q.end(), v) != q.end();
            if (touches)
                for (const auto& [a, info] : attrs) expect.insert(a);
        }
        std::set<std::string> got;
        for (const auto& [a, _] : kg_subgraph(kg, q)) got.insert(a);
        EXPECT_EQ(got, expect);
    }
}

TEST(CatalogIo, EmptyRoundTrip) {
    auto path = temp_file("empty.jsonl");
    save_catalog(Catalog{}, path);
    EXPECT_TRUE(load_catalog(path).empty());
}

TEST(CatalogIo, RoundTripPreservesEverything) {
    CatalogConfig cfg;
    cfg.num_products = 100;
    auto g = generate_catalog(cfg);
    auto path = temp_file("cat.jsonl");
    save_catalog(g.catalog, path);
    EXPECT_EQ(load_catalog(path), g.catalog);
    auto kpath = temp_file("kg.json");
    save_kg(g.kg, kpath);
    EXPECT_EQ(load_kg(kpath), g.kg);
}

TEST(CatalogIo, TruncatedRecordNamesItsLine) {
    CatalogConfig cfg;
    cfg.num_products = 5;
    auto text = catalog_to_jsonl(generate_catalog(cfg).catalog);
    // Cut the third record in half.
    std::size_t start = 0;
    for (int i = 0; i < 2; ++i) start = text.find('\n', start) + 1;
    std::size_t end = text.find('\n', start);
    text = text.substr(0, start) + text.substr(start, (end - start) / 2) + text.substr(end);
    try {
        catalog_from_jsonl(text);
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
}

TEST(CatalogIo, MissingFieldIsParseError) {
    EXPECT_THROW(catalog_from_jsonl(R"({"id":"p1","title":"x"})"), ParseError);
}

TEST(TrendTable, EveryEntryMentionsKnownCategories) {
    CatalogConfig cfg;
    cfg.num_products = 0;
    auto kg = generate_catalog(cfg).kg;
    auto table = make_trend_table(kg, 3);
    EXPECT_FALSE(table.empty());
    for (const auto& [term, trends] : table) {
        EXPECT_TRUE(kg.has_category(term)) << term;
        EXPECT_FALSE(trends.empty());
    }
    EXPECT_EQ(table, make_trend_table(kg, 3));
}
