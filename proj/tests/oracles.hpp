#pragma once

// Deliberately naive reference implementations. They share no code with the
// library beyond plain data types, so agreement means something.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "genfacet/catalog.hpp"
#include "genfacet/lexindex.hpp"
#include "genfacet/policy.hpp"

namespace oracle {

inline double precision(const std::vector<std::string>& gen, const std::vector<std::string>& gold, std::size_t k) {
    std::vector<std::string> counted;
    for (std::size_t i = 0; i < gen.size() && i < k; ++i) {
        bool in_gold = std::find(gold.begin(), gold.end(), gen[i]) != gold.end();
        bool dup = std::find(counted.begin(), counted.end(), gen[i]) != counted.end();
        if (in_gold && !dup) counted.push_back(gen[i]);
    }
    return double(counted.size()) / double(k);
}

inline double recall(const std::vector<std::string>& gen, const std::vector<std::string>& gold, std::size_t k) {
    std::vector<std::string> distinct_gold;
    for (const auto& g : gold)
        if (std::find(distinct_gold.begin(), distinct_gold.end(), g) == distinct_gold.end()) distinct_gold.push_back(g);
    std::size_t hits = 0;
    for (const auto& g : distinct_gold)
        for (std::size_t i = 0; i < gen.size() && i < k; ++i)
            if (gen[i] == g) {
                ++hits;
                break;
            }
    return double(hits) / double(distinct_gold.size());
}

/// Binary or graded gain g / log2(rank + 1), rank 1-based.
inline double ndcg(const std::vector<std::string>& ranked, const std::map<std::string, double>& grades, std::size_t k) {
    auto grade = [&](const std::string& id) {
        auto it = grades.find(id);
        return it == grades.end() ? 0.0 : it->second;
    };
    double dcg = 0.0;
    for (std::size_t r = 1; r <= k && r <= ranked.size(); ++r) dcg += grade(ranked[r - 1]) / std::log2(r + 1.0);
    std::vector<double> all;
    for (const auto& kv : grades) all.push_back(kv.second);
    std::sort(all.rbegin(), all.rend());
    double idcg = 0.0;
    for (std::size_t r = 1; r <= k && r <= all.size(); ++r) idcg += all[r - 1] / std::log2(r + 1.0);
    return idcg == 0.0 ? 0.0 : dcg / idcg;
}

/// Every ordered k-subset of {0..n-1}.
inline void ordered_subsets(std::size_t n, std::size_t k, std::vector<std::size_t>& cur,
                            std::vector<std::vector<std::size_t>>& out) {
    if (cur.size() == k) {
        out.push_back(cur);
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (std::find(cur.begin(), cur.end(), i) != cur.end()) continue;
        cur.push_back(i);
        ordered_subsets(n, k, cur, out);
        cur.pop_back();
    }
}
inline std::vector<std::vector<std::size_t>> ordered_subsets(std::size_t n, std::size_t k) {
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> cur;
    ordered_subsets(n, k, cur, out);
    return out;
}

/// Sequential-choice probability written out directly from exp(score).
inline double pl_prob(const std::vector<double>& scores, const std::vector<std::size_t>& order) {
    std::vector<bool> used(scores.size(), false);
    double p = 1.0;
    for (auto i : order) {
        double z = 0.0;
        for (std::size_t j = 0; j < scores.size(); ++j)
            if (!used[j]) z += std::exp(scores[j]);
        p *= std::exp(scores[i]) / z;
        used[i] = true;
    }
    return p;
}

inline std::vector<double> scores(const genfacet::LinearPolicy& p, const genfacet::FeatureMatrix& rows) {
    std::vector<double> s;
    for (const auto& r : rows) {
        double d = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) d += p.weights[j] * r[j];
        s.push_back(d / p.temperature);
    }
    return s;
}

/// Exact KL between two list distributions by enumeration.
inline double list_kl(const genfacet::LinearPolicy& p, const genfacet::LinearPolicy& ref,
                      const genfacet::FeatureMatrix& rows, std::size_t k) {
    auto sp = scores(p, rows), sr = scores(ref, rows);
    double kl = 0.0;
    for (const auto& o : ordered_subsets(rows.size(), k)) {
        double a = pl_prob(sp, o), b = pl_prob(sr, o);
        if (a > 0) kl += a * std::log(a / b);
    }
    return kl;
}

/// Lowercased alphanumeric runs, written independently of the library tokenizer.
inline std::vector<std::string> words(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

/// Term frequency of `term` in every product's indexed text, by scanning.
inline std::map<std::string, std::size_t> scan_postings(const genfacet::Catalog& catalog, const std::string& term) {
    std::map<std::string, std::size_t> out;
    for (const auto& p : catalog.products()) {
        std::string text = p.title + " " + p.category;
        for (const auto& [a, v] : p.attrs) text += " " + v;
        std::size_t tf = 0;
        for (const auto& w : words(text)) tf += w == term;
        if (tf) out[p.id] = tf;
    }
    return out;
}

/// Static candidates intersected with an attribute scan.
inline std::vector<std::string> filter_by_scan(const std::vector<genfacet::RankedResult>& candidates,
                                               const genfacet::Catalog& catalog,
                                               const std::vector<genfacet::FacetSelection>& sel) {
    std::set<std::string> matching;
    for (const auto& p : catalog.products()) {
        bool ok = true;
        for (const auto& s : sel) {
            auto it = p.attrs.find(s.name);
            if (it == p.attrs.end() || it->second != s.value) ok = false;
        }
        if (ok) matching.insert(p.id);
    }
    std::vector<std::string> out;
    for (const auto& r : candidates)
        if (matching.count(r.doc_id)) out.push_back(r.doc_id);
    return out;
}

/// Schema check written from the data model alone.
inline bool product_valid(const genfacet::Product& p, const genfacet::KnowledgeGraph& kg) {
    auto c = kg.categories.find(p.category);
    if (c == kg.categories.end()) return false;
    if (p.id.empty() || p.title.empty() || !(p.popularity >= 0.0 && p.popularity <= 1.0)) return false;
    for (const auto& [a, v] : p.attrs) {
        auto ai = c->second.find(a);
        if (ai == c->second.end()) return false;
        if (std::find(ai->second.values.begin(), ai->second.values.end(), v) == ai->second.values.end()) return false;
    }
    return true;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)}); }

}  // namespace oracle
