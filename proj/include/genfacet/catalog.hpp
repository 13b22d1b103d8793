#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace genfacet {

/// Raised by the file loaders; carries the 1-based line of the offending record.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

struct Product {
    std::string id;
    std::string title;
    std::string category;
    std::map<std::string, std::string> attrs;
    double popularity = 0.0;

    bool operator==(const Product&) const = default;
};

/// Values of one attribute in one category, with the curator-assigned prior.
struct AttributeInfo {
    std::vector<std::string> values;
    double prior = 0.0;

    bool operator==(const AttributeInfo&) const = default;
};

using AttributeMap = std::map<std::string, AttributeInfo>;
/// Attribute -> values restricted to the categories a query touches.
using AttributeSubgraph = AttributeMap;

struct KnowledgeGraph {
    std::map<std::string, AttributeMap> categories;

    bool has_category(const std::string& c) const { return categories.count(c) != 0; }
    const AttributeMap* attributes(const std::string& category) const;
    /// Union of an attribute's values over every category, first-seen order.
    std::vector<std::string> all_values(const std::string& attribute) const;
    /// Attribute owning `value`, searched over every category.
    std::optional<std::string> attribute_of_value(const std::string& value) const;
    bool has_attribute(const std::string& attribute) const;

    bool operator==(const KnowledgeGraph&) const = default;
};

class Catalog {
public:
    Catalog() = default;
    explicit Catalog(std::vector<Product> products);

    const std::vector<Product>& products() const noexcept { return products_; }
    std::size_t size() const noexcept { return products_.size(); }
    bool empty() const noexcept { return products_.empty(); }
    const Product* find(const std::string& id) const;

    bool operator==(const Catalog& o) const { return products_ == o.products_; }

private:
    std::vector<Product> products_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

struct CatalogConfig {
    std::size_t num_products = 10000;
    std::size_t num_categories = 15;
    std::size_t attrs_min = 18, attrs_max = 26;
    std::size_t values_min = 4, values_max = 8;
    std::uint64_t seed = 1;
};

struct GeneratedCatalog {
    Catalog catalog;
    KnowledgeGraph kg;
};

/// Pure function of `config`; never throws for degenerate counts.
GeneratedCatalog generate_catalog(const CatalogConfig& config);

/// Attribute -> values for every category whose name or value tokens meet `query_terms`.
AttributeSubgraph kg_subgraph(const KnowledgeGraph& kg, const std::vector<std::string>& query_terms);

/// Schema check: category known, attrs declared, values listed, popularity in range.
/// Returns an empty string when the product is valid, otherwise the first violation.
std::string validate_product(const Product& p, const KnowledgeGraph& kg);

/// Per-category trend strings for the file-backed knowledge provider: a couple of
/// low-prior ("emerging") attribute values plus one cross-category buzzword.
std::map<std::string, std::vector<std::string>> make_trend_table(const KnowledgeGraph& kg,
                                                                 std::uint64_t seed);

void save_catalog(const Catalog& catalog, const std::filesystem::path& path);
Catalog load_catalog(const std::filesystem::path& path);
std::string catalog_to_jsonl(const Catalog& catalog);
Catalog catalog_from_jsonl(const std::string& text);

void save_kg(const KnowledgeGraph& kg, const std::filesystem::path& path);
KnowledgeGraph load_kg(const std::filesystem::path& path);
std::string kg_to_json(const KnowledgeGraph& kg);
KnowledgeGraph kg_from_json(const std::string& text);

namespace words {
const std::vector<std::string>& categories();
/// (attribute name, value pool) pairs; value words are disjoint across attributes.
const std::vector<std::pair<std::string, std::vector<std::string>>>& attributes();
}  // namespace words

}  // namespace genfacet
