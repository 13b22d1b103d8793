#include "genfacet/catalog.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "genfacet/rng.hpp"
#include "genfacet/text.hpp"

namespace genfacet {

using ojson = nlohmann::ordered_json;

const AttributeMap* KnowledgeGraph::attributes(const std::string& category) const {
    auto it = categories.find(category);
    return it == categories.end() ? nullptr : &it->second;
}

std::vector<std::string> KnowledgeGraph::all_values(const std::string& attribute) const {
    std::vector<std::string> out;
    for (const auto& [cat, attrs] : categories) {
        auto it = attrs.find(attribute);
        if (it == attrs.end()) continue;
        for (const auto& v : it->second.values)
            if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    }
    return out;
}

std::optional<std::string> KnowledgeGraph::attribute_of_value(const std::string& value) const {
    for (const auto& [cat, attrs] : categories)
        for (const auto& [name, info] : attrs)
            if (std::find(info.values.begin(), info.values.end(), value) != info.values.end()) return name;
    return std::nullopt;
}

bool KnowledgeGraph::has_attribute(const std::string& attribute) const {
    for (const auto& [cat, attrs] : categories)
        if (attrs.count(attribute)) return true;
    return false;
}

Catalog::Catalog(std::vector<Product> products) : products_(std::move(products)) {
    by_id_.reserve(products_.size());
    for (std::size_t i = 0; i < products_.size(); ++i) {
        if (!by_id_.emplace(products_[i].id, i).second)
            throw std::invalid_argument("duplicate product id: " + products_[i].id);
    }
}

const Product* Catalog::find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &products_[it->second];
}

namespace {

std::string category_word(std::size_t i) {
    const auto& list = words::categories();
    if (i < list.size()) return list[i];
    return list[i % list.size()] + std::to_string(i / list.size() + 1);
}

std::string product_id(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "p%05zu", i);
    return buf;
}

std::pair<std::size_t, std::size_t> ordered(std::size_t a, std::size_t b) { return {std::min(a, b), std::max(a, b)}; }

}  // namespace

GeneratedCatalog generate_catalog(const CatalogConfig& config) {
    Rng rng(derive_seed(config.seed, {0xca7a109ULL}));
    const auto& pool = words::attributes();
    auto [amin, amax] = ordered(config.attrs_min, config.attrs_max);
    auto [vmin, vmax] = ordered(config.values_min, config.values_max);
    amax = std::min(amax, pool.size());
    amin = std::min(amin, amax);

    GeneratedCatalog out;
    std::vector<std::string> cat_names;
    for (std::size_t c = 0; c < config.num_categories; ++c) {
        std::string name = category_word(c);
        cat_names.push_back(name);
        std::vector<std::size_t> idx(pool.size());
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        std::size_t m = rng.between(amin, amax);
        // Zipf-shaped priors over a random rank order of the chosen attributes.
        AttributeMap attrs;
        for (std::size_t r = 0; r < m; ++r) {
            const auto& [aname, avalues] = pool[idx[r]];
            std::size_t hi = std::min(vmax, avalues.size());
            std::size_t lo = std::min(std::max<std::size_t>(vmin, 1), hi);
            std::size_t nv = rng.between(lo, hi);
            std::vector<std::size_t> vidx(avalues.size());
            std::iota(vidx.begin(), vidx.end(), 0);
            rng.shuffle(vidx);
            vidx.resize(nv);
            std::sort(vidx.begin(), vidx.end());
            AttributeInfo info;
            for (auto v : vidx) info.values.push_back(avalues[v]);
            info.prior = 1.0 / static_cast<double>(r + 1);
            attrs.emplace(aname, std::move(info));
        }
        out.kg.categories.emplace(name, std::move(attrs));
    }

    std::vector<Product> products;
    if (!cat_names.empty()) {
        std::vector<std::size_t> rank(config.num_products);
        std::iota(rank.begin(), rank.end(), 1);
        rng.shuffle(rank);
        products.reserve(config.num_products);
        for (std::size_t i = 0; i < config.num_products; ++i) {
            Product p;
            p.id = product_id(i);
            p.category = cat_names[rng.below(cat_names.size())];
            const AttributeMap& attrs = out.kg.categories.at(p.category);
            for (const auto& [aname, info] : attrs) p.attrs[aname] = info.values[rng.below(info.values.size())];
            // Title: a couple of value words followed by the category word.
            std::vector<std::string> names;
            for (const auto& [aname, _] : attrs) names.push_back(aname);
            rng.shuffle(names);
            names.resize(std::min<std::size_t>(2, names.size()));
            std::sort(names.begin(), names.end());
            std::vector<std::string> title;
            for (const auto& n : names) title.push_back(p.attrs[n]);
            title.push_back(p.category);
            p.title = join(title);
            p.popularity = std::pow(1.0 / static_cast<double>(rank[i]), 1.1);
            products.push_back(std::move(p));
        }
    }
    out.catalog = Catalog(std::move(products));
    return out;
}

AttributeSubgraph kg_subgraph(const KnowledgeGraph& kg, const std::vector<std::string>& query_terms) {
    std::set<std::string> terms(query_terms.begin(), query_terms.end());
    AttributeSubgraph out;
    if (terms.empty()) return out;
    for (const auto& [cat, attrs] : kg.categories) {
        bool hit = false;
        for (const auto& t : tokenize(cat)) hit = hit || terms.count(t);
        for (auto it = attrs.begin(); !hit && it != attrs.end(); ++it)
            for (const auto& v : it->second.values) {
                for (const auto& t : tokenize(v)) hit = hit || terms.count(t);
                if (hit) break;
            }
        if (!hit) continue;
        for (const auto& [name, info] : attrs) {
            auto [slot, inserted] = out.try_emplace(name, info);
            if (inserted) continue;
            slot->second.prior = std::max(slot->second.prior, info.prior);
            for (const auto& v : info.values)
                if (std::find(slot->second.values.begin(), slot->second.values.end(), v) ==
                    slot->second.values.end())
                    slot->second.values.push_back(v);
        }
    }
    return out;
}

std::string validate_product(const Product& p, const KnowledgeGraph& kg) {
    if (p.id.empty()) return "empty id";
    const AttributeMap* attrs = kg.attributes(p.category);
    if (!attrs) return "unknown category '" + p.category + "'";
    for (const auto& [name, value] : p.attrs) {
        auto it = attrs->find(name);
        if (it == attrs->end()) return "attribute '" + name + "' not declared for " + p.category;
        if (std::find(it->second.values.begin(), it->second.values.end(), value) == it->second.values.end())
            return "value '" + value + "' not listed for " + name;
    }
    if (!(p.popularity >= 0.0 && p.popularity <= 1.0)) return "popularity out of range";
    return {};
}

std::map<std::string, std::vector<std::string>> make_trend_table(const KnowledgeGraph& kg, std::uint64_t seed) {
    Rng rng(derive_seed(seed, {0x7e4d5ULL}));
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& [cat, attrs] : kg.categories) {
        std::vector<std::pair<double, std::string>> by_prior;
        for (const auto& [name, info] : attrs) by_prior.emplace_back(info.prior, name);
        std::sort(by_prior.begin(), by_prior.end());
        std::size_t tail = std::max<std::size_t>(1, by_prior.size() / 2);
        std::vector<std::string> emerging;
        for (std::size_t i = 0; i < tail && i < by_prior.size(); ++i) emerging.push_back(by_prior[i].second);
        rng.shuffle(emerging);
        emerging.resize(std::min<std::size_t>(2, emerging.size()));
        std::vector<std::string> trends;
        for (const auto& a : emerging) {
            const auto& vals = attrs.at(a).values;
            trends.push_back(vals[rng.below(vals.size())] + " " + cat);
        }
        // Buzz from outside the category: surfaces a candidate the inventory cannot back.
        std::vector<std::string> foreign;
        for (const auto& [aname, pool] : words::attributes())
            if (!attrs.count(aname) && kg.has_attribute(aname)) foreign.push_back(aname);
        if (!foreign.empty()) {
            auto vals = kg.all_values(foreign[rng.below(foreign.size())]);
            trends.push_back(vals[rng.below(vals.size())]);
        }
        out.emplace(cat, std::move(trends));
    }
    return out;
}

// ---- persistence ----

std::string catalog_to_jsonl(const Catalog& catalog) {
    std::string out;
    for (const auto& p : catalog.products()) {
        ojson j;
        j["id"] = p.id;
        j["title"] = p.title;
        j["category"] = p.category;
        ojson attrs = ojson::object();
        for (const auto& [k, v] : p.attrs) attrs[k] = v;
        j["attrs"] = std::move(attrs);
        j["pop"] = p.popularity;
        out += j.dump();
        out += '\n';
    }
    return out;
}

Catalog catalog_from_jsonl(const std::string& text) {
    std::vector<Product> products;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(lineno, std::string("malformed record: ") + e.what());
        }
        try {
            Product p;
            p.id = j.at("id").get<std::string>();
            p.title = j.at("title").get<std::string>();
            p.category = j.at("category").get<std::string>();
            for (const auto& [k, v] : j.at("attrs").items()) p.attrs[k] = v.get<std::string>();
            p.popularity = j.at("pop").get<double>();
            products.push_back(std::move(p));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(lineno, std::string("bad product record: ") + e.what());
        }
    }
    try {
        return Catalog(std::move(products));
    } catch (const std::invalid_argument& e) {
        throw ParseError(lineno, e.what());
    }
}

void save_catalog(const Catalog& catalog, const std::filesystem::path& path) {
    write_text_file(path, catalog_to_jsonl(catalog));
}

Catalog load_catalog(const std::filesystem::path& path) { return catalog_from_jsonl(read_text_file(path)); }

std::string kg_to_json(const KnowledgeGraph& kg) {
    ojson root = ojson::object();
    for (const auto& [cat, attrs] : kg.categories) {
        ojson c = ojson::object();
        for (const auto& [name, info] : attrs) c[name] = ojson{{"values", info.values}, {"prior", info.prior}};
        root[cat] = std::move(c);
    }
    return root.dump(1) + "\n";
}

KnowledgeGraph kg_from_json(const std::string& text) {
    KnowledgeGraph kg;
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
        for (const auto& [cat, attrs] : root.items()) {
            AttributeMap m;
            for (const auto& [name, info] : attrs.items()) {
                AttributeInfo a;
                a.values = info.at("values").get<std::vector<std::string>>();
                a.prior = info.at("prior").get<double>();
                if (a.values.empty()) throw std::runtime_error("attribute " + name + " has no values");
                if (!(a.prior >= 0.0) || !std::isfinite(a.prior))
                    throw std::runtime_error("attribute " + name + " has invalid prior");
                m.emplace(name, std::move(a));
            }
            kg.categories.emplace(cat, std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(1, std::string("malformed knowledge graph: ") + e.what());
    } catch (const std::runtime_error& e) {
        throw ParseError(1, e.what());
    }
    return kg;
}

void save_kg(const KnowledgeGraph& kg, const std::filesystem::path& path) { write_text_file(path, kg_to_json(kg)); }

KnowledgeGraph load_kg(const std::filesystem::path& path) { return kg_from_json(read_text_file(path)); }

}  // namespace genfacet
