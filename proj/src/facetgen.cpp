#include "genfacet/facetgen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

#include <json.hpp>

#include "genfacet/llm_client.hpp"

namespace genfacet {

namespace {

std::set<std::string> value_tokens(const std::vector<std::string>& values) {
    std::set<std::string> out;
    for (const auto& v : values)
        for (auto& t : tokenize(v)) out.insert(std::move(t));
    return out;
}

double profile_share(const Profile& profile, const std::set<std::string>& vocab) {
    double total = 0.0, hit = 0.0;
    for (const auto& [tag, w] : profile) {
        if (!(w > 0.0)) continue;
        total += w;
        auto toks = tokenize(tag);
        if (std::any_of(toks.begin(), toks.end(), [&](auto& t) { return vocab.count(t) != 0; })) hit += w;
    }
    return total > 0.0 ? hit / total : 0.0;
}

/// Fraction of behavior-product pairs that agree on the attribute's value.
double pairwise_agreement(const std::vector<const Product*>& products, const std::string& attribute) {
    std::vector<const std::string*> vals;
    for (const auto* p : products) {
        auto it = p->attrs.find(attribute);
        if (it != p->attrs.end()) vals.push_back(&it->second);
    }
    if (vals.size() < 2) return 0.0;
    std::size_t agree = 0, pairs = 0;
    for (std::size_t i = 0; i < vals.size(); ++i)
        for (std::size_t j = i + 1; j < vals.size(); ++j) {
            ++pairs;
            agree += *vals[i] == *vals[j];
        }
    return static_cast<double>(agree) / static_cast<double>(pairs);
}

double entropy_from_counts(const std::map<std::string, std::size_t>& counts, std::size_t absent, std::size_t total,
                           std::size_t num_values) {
    if (total == 0 || num_values == 0) return 0.0;
    double h = 0.0;
    auto add = [&](std::size_t c) {
        if (c == 0) return;
        const double p = static_cast<double>(c) / static_cast<double>(total);
        h -= p * std::log(p);
    };
    for (const auto& [_, c] : counts) add(c);
    add(absent);
    return std::clamp(h / std::log(static_cast<double>(num_values) + 1.0), 0.0, 1.0);
}

}  // namespace

double normalized_value_entropy(const std::vector<RankedResult>& results, const Catalog& catalog,
                                const std::string& attribute, std::size_t num_values) {
    std::map<std::string, std::size_t> counts;
    std::size_t absent = 0, total = 0;
    for (const auto& r : results) {
        const Product* p = catalog.find(r.doc_id);
        if (!p) continue;
        ++total;
        auto it = p->attrs.find(attribute);
        if (it == p->attrs.end())
            ++absent;
        else
            ++counts[it->second];
    }
    return entropy_from_counts(counts, absent, total, num_values);
}

std::vector<CandidateFacet> mine_candidates(const SessionContext& ctx, const KnowledgeGraph& kg,
                                            const InvertedIndex& index, const Catalog& catalog,
                                            std::size_t result_depth) {
    std::map<std::string, CandidateFacet> found;
    for (const auto& [name, info] : ctx.kg_view) found[name] = CandidateFacet{name, info.values, {}};

    std::vector<std::vector<std::string>> trend_tokens;
    for (const auto& t : ctx.web_trends) {
        trend_tokens.push_back(tokenize(t.term));
        for (const auto& tok : trend_tokens.back()) {
            auto attr = kg.attribute_of_value(tok);
            if (attr && !found.count(*attr)) found[*attr] = CandidateFacet{*attr, kg.all_values(*attr), {}};
        }
    }
    if (found.empty()) return {};

    const auto query_tokens = tokenize(ctx.query);
    const std::set<std::string> q(query_tokens.begin(), query_tokens.end());

    std::vector<const Product*> behavior_products;
    for (const auto& b : ctx.behaviors)
        if (const Product* p = catalog.find(b.product_id)) behavior_products.push_back(p);

    // One pass over the current results fills every attribute's value histogram.
    const auto results = search(index, ctx.query, result_depth);
    std::map<std::string, std::map<std::string, std::size_t>> hist;
    std::size_t total = 0;
    for (const auto& r : results) {
        const Product* p = catalog.find(r.doc_id);
        if (!p) continue;
        ++total;
        for (const auto& [a, v] : p->attrs)
            if (found.count(a)) ++hist[a][v];
    }

    std::vector<CandidateFacet> out;
    out.reserve(found.size());
    for (auto& [name, cand] : found) {
        const auto vocab = value_tokens(cand.values);
        std::vector<double> f(kFacetFeatureDim, 0.0);

        auto kv = ctx.kg_view.find(name);
        f[kFeatPrior] = kv == ctx.kg_view.end() ? 0.0 : kv->second.prior;

        if (!q.empty()) {
            std::size_t overlap = 0;
            for (const auto& t : q) overlap += vocab.count(t);
            f[kFeatLexical] = static_cast<double>(overlap) / static_cast<double>(q.size());
        }

        f[kFeatBehavior] = 0.5 * profile_share(ctx.profile, vocab) + 0.5 * pairwise_agreement(behavior_products, name);

        double trend = 0.0;
        for (std::size_t i = 0; i < ctx.web_trends.size(); ++i) {
            const auto& toks = trend_tokens[i];
            if (std::any_of(toks.begin(), toks.end(), [&](auto& t) { return vocab.count(t) != 0; }))
                trend += ctx.web_trends[i].weight;
        }
        f[kFeatTrend] = std::min(1.0, trend);

        std::size_t present = 0;
        auto h = hist.find(name);
        static const std::map<std::string, std::size_t> kEmpty;
        const auto& counts = h == hist.end() ? kEmpty : h->second;
        for (const auto& [_, c] : counts) present += c;
        f[kFeatEntropy] = entropy_from_counts(counts, total - present, total, cand.values.size());

        f[kFeatBias] = 1.0;
        cand.features = std::move(f);
        out.push_back(std::move(cand));
    }
    return out;
}

FeatureMatrix feature_matrix(const std::vector<CandidateFacet>& candidates) {
    FeatureMatrix rows;
    rows.reserve(candidates.size());
    for (const auto& c : candidates) rows.push_back(c.features);
    return rows;
}

namespace {

FacetList to_facets(const std::vector<CandidateFacet>& candidates, const std::vector<std::size_t>& order,
                    const std::vector<double>& scores) {
    FacetList out;
    out.reserve(order.size());
    for (auto i : order) out.push_back(Facet{candidates[i].name, candidates[i].values, scores[i], candidates[i].features});
    return out;
}

}  // namespace

FacetSample sample_facet_list(const FacetPolicyParams& params, const std::vector<CandidateFacet>& candidates,
                              std::size_t k, Rng& rng) {
    const auto rows = feature_matrix(candidates);
    FacetSample s;
    s.order = pl_sample(params, rows, k, rng);
    // Same code path as list_logprob so the two agree exactly.
    s.log_prob = pl_log_prob(params, rows, s.order);
    s.facets = to_facets(candidates, s.order, policy_scores(params, rows));
    return s;
}

std::vector<std::size_t> candidate_order(const std::vector<CandidateFacet>& candidates,
                                         const std::vector<std::string>& names) {
    std::vector<std::size_t> order;
    order.reserve(names.size());
    for (const auto& n : names) {
        auto it = std::find_if(candidates.begin(), candidates.end(), [&](auto& c) { return c.name == n; });
        if (it == candidates.end()) throw std::invalid_argument("facet not among candidates: " + n);
        auto idx = static_cast<std::size_t>(it - candidates.begin());
        if (std::find(order.begin(), order.end(), idx) != order.end())
            throw std::invalid_argument("facet listed twice: " + n);
        order.push_back(idx);
    }
    return order;
}

double list_logprob(const FacetPolicyParams& params, const std::vector<CandidateFacet>& candidates,
                    const FacetList& list) {
    std::vector<std::string> names;
    for (const auto& f : list) names.push_back(f.name);
    return pl_log_prob(params, feature_matrix(candidates), candidate_order(candidates, names));
}

FacetList rank_facets(const FacetPolicyParams& params, const std::vector<CandidateFacet>& candidates, std::size_t k) {
    const auto rows = feature_matrix(candidates);
    // Candidates arrive sorted by name, so the stable argmax breaks ties by name.
    return to_facets(candidates, pl_argmax(params, rows, k), policy_scores(params, rows));
}

FacetList rule_based_facets(const KnowledgeGraph& kg, const std::string& category, std::size_t k) {
    const AttributeMap* attrs = kg.attributes(category);
    if (!attrs) return {};
    std::vector<const std::pair<const std::string, AttributeInfo>*> items;
    for (const auto& kv : *attrs) items.push_back(&kv);
    std::stable_sort(items.begin(), items.end(), [](auto* a, auto* b) { return a->second.prior > b->second.prior; });
    FacetList out;
    for (std::size_t i = 0; i < items.size() && i < k; ++i)
        out.push_back(Facet{items[i]->first, items[i]->second.values, items[i]->second.prior, {}});
    return out;
}

double gini_impurity(const std::vector<RankedResult>& results, const Catalog& catalog, const std::string& attribute) {
    std::map<std::string, std::size_t> counts;
    std::size_t n = 0;
    for (const auto& r : results) {
        const Product* p = catalog.find(r.doc_id);
        if (!p) continue;
        auto it = p->attrs.find(attribute);
        if (it == p->attrs.end()) continue;
        ++counts[it->second];
        ++n;
    }
    if (n == 0) return 0.0;
    double sq = 0.0;
    for (const auto& [_, c] : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(n);
        sq += p * p;
    }
    return 1.0 - sq;
}

FacetList gini_rank_facets(const std::vector<RankedResult>& results, const Catalog& catalog, std::size_t k) {
    std::map<std::string, std::map<std::string, std::size_t>> hist;
    for (const auto& r : results) {
        const Product* p = catalog.find(r.doc_id);
        if (!p) continue;
        for (const auto& [a, v] : p->attrs) ++hist[a][v];
    }
    FacetList out;
    for (const auto& [name, counts] : hist) {
        std::vector<std::pair<std::string, std::size_t>> vals(counts.begin(), counts.end());
        std::stable_sort(vals.begin(), vals.end(), [](auto& a, auto& b) { return a.second > b.second; });
        Facet f{name, {}, gini_impurity(results, catalog, name), {}};
        for (auto& [v, _] : vals) f.values.push_back(v);
        out.push_back(std::move(f));
    }
    std::stable_sort(out.begin(), out.end(), [](const Facet& a, const Facet& b) { return a.score > b.score; });
    if (out.size() > k) out.resize(k);
    return out;
}

// ---- external generator path ----

namespace {

nlohmann::json extract_payload(const std::string& text) {
    const std::string body = trim(text);
    if (body.empty()) throw LlmParseError("empty facet payload", text);
    auto parsed = nlohmann::json::parse(body, nullptr, false);
    if (!parsed.is_discarded()) return parsed;
    // Models often wrap the JSON in prose or a code fence.
    for (auto [open, close] : {std::pair{'[', ']'}, std::pair{'{', '}'}}) {
        auto a = body.find(open);
        auto b = body.rfind(close);
        if (a == std::string::npos || b == std::string::npos || b < a) continue;
        parsed = nlohmann::json::parse(body.substr(a, b - a + 1), nullptr, false);
        if (!parsed.is_discarded()) return parsed;
    }
    throw LlmParseError("facet payload is not JSON", text);
}

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

LlmFacetResult parse_llm_facets(const std::string& text, const KnowledgeGraph& kg) {
    auto payload = extract_payload(text);
    if (payload.is_object() && payload.contains("facets")) payload = payload["facets"];
    if (!payload.is_array()) throw LlmParseError("facet payload must be a list", text);
    if (payload.empty()) throw LlmParseError("facet payload has no facets", text);

    LlmFacetResult out;
    std::set<std::string> seen;
    for (const auto& item : payload) {
        if (!item.is_object() || !item.contains("name") || !item["name"].is_string())
            throw LlmParseError("facet entry without a name", text);
        const std::string name = lower(trim(item["name"].get<std::string>()));
        if (!kg.has_attribute(name)) {
            ++out.dropped;
            continue;
        }
        if (!seen.insert(name).second) continue;
        const auto known = kg.all_values(name);
        Facet f{name, {}, 0.0, {}};
        if (item.contains("values") && item["values"].is_array())
            for (const auto& v : item["values"]) {
                if (!v.is_string()) continue;
                std::string val = lower(trim(v.get<std::string>()));
                if (std::find(known.begin(), known.end(), val) != known.end() &&
                    std::find(f.values.begin(), f.values.end(), val) == f.values.end())
                    f.values.push_back(std::move(val));
            }
        if (f.values.empty()) f.values = known;
        f.score = static_cast<double>(payload.size() - out.facets.size());
        out.facets.push_back(std::move(f));
    }
    return out;
}

LlmFacetResult llm_generate_facets(LlmClient& client, const std::string& prompt, const KnowledgeGraph& kg) {
    return parse_llm_facets(client.complete(prompt), kg);
}

}  // namespace genfacet
