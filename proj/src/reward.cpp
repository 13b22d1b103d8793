#include "genfacet/reward.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace genfacet {

void RewardConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("reward alpha must lie in [0,1]");
    if (!(w_recall >= 0.0 && w_sem >= 0.0) || std::abs(w_recall + w_sem - 1.0) > 1e-9)
        throw std::invalid_argument("w_recall and w_sem must be non-negative and sum to 1");
    if (k_eval == 0) throw std::invalid_argument("k_eval must be >= 1");
}

double facet_coverage(const std::vector<std::string>& generated, const std::vector<std::string>& reference) {
    const std::set<std::string> ref(reference.begin(), reference.end());
    if (ref.empty()) throw std::invalid_argument("facet coverage needs a non-empty reference");
    std::set<std::string> hit;
    for (const auto& g : generated)
        if (ref.count(g)) hit.insert(g);
    return static_cast<double>(hit.size()) / static_cast<double>(ref.size());
}

namespace {
std::vector<std::string> names_of(const FacetList& list) {
    std::vector<std::string> out;
    for (const auto& f : list) out.push_back(f.name);
    return out;
}

double sigmoid(double z) {
    return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}
}  // namespace

double facet_coverage(const FacetList& generated, const FacetList& reference) {
    return facet_coverage(names_of(generated), names_of(reference));
}

double predicted_ctr(const CtrModel& model, const std::vector<double>& features) {
    if (features.size() != model.weights.size())
        throw std::invalid_argument("CTR model expects " + std::to_string(model.weights.size()) + " features, got " +
                                    std::to_string(features.size()));
    double z = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) z += model.weights[i] * features[i];
    return sigmoid(z);
}

CtrModel fit_ctr_model(const std::vector<CtrExample>& examples, double l2, std::size_t max_iter) {
    CtrModel m;
    if (examples.empty()) return m;
    const std::size_t d = examples.front().features.size();
    m.weights.assign(d, 0.0);
    const double n = static_cast<double>(examples.size());
    for (std::size_t it = 0; it < max_iter; ++it) {
        std::vector<double> g(d, 0.0);
        std::vector<std::vector<double>> h(d, std::vector<double>(d + 1, 0.0));
        for (const auto& ex : examples) {
            if (ex.features.size() != d) throw std::invalid_argument("CTR examples differ in dimension");
            const double p = predicted_ctr(m, ex.features);
            const double r = p - (ex.clicked ? 1.0 : 0.0);
            const double s = p * (1.0 - p);
            for (std::size_t i = 0; i < d; ++i) {
                g[i] += r * ex.features[i] / n;
                for (std::size_t j = 0; j < d; ++j) h[i][j] += s * ex.features[i] * ex.features[j] / n;
            }
        }
        for (std::size_t i = 0; i < d; ++i) {
            g[i] += l2 * m.weights[i];
            h[i][i] += l2;
            h[i][d] = g[i];
        }
        // Gaussian elimination with partial pivoting on [H | g].
        for (std::size_t c = 0; c < d; ++c) {
            std::size_t piv = c;
            for (std::size_t r = c + 1; r < d; ++r)
                if (std::abs(h[r][c]) > std::abs(h[piv][c])) piv = r;
            std::swap(h[c], h[piv]);
            if (std::abs(h[c][c]) < 1e-300) continue;
            for (std::size_t r = 0; r < d; ++r) {
                if (r == c) continue;
                const double f = h[r][c] / h[c][c];
                for (std::size_t k = c; k <= d; ++k) h[r][k] -= f * h[c][k];
            }
        }
        double step = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double delta = std::abs(h[i][i]) < 1e-300 ? 0.0 : h[i][d] / h[i][i];
            m.weights[i] -= delta;
            step = std::max(step, std::abs(delta));
        }
        if (step < 1e-10) break;
    }
    return m;
}

double log_loss(const CtrModel& model, const std::vector<CtrExample>& examples) {
    if (examples.empty()) return 0.0;
    double total = 0.0;
    for (const auto& ex : examples) {
        const double p = std::clamp(predicted_ctr(model, ex.features), 1e-15, 1.0 - 1e-15);
        total -= ex.clicked ? std::log(p) : std::log(1.0 - p);
    }
    return total / static_cast<double>(examples.size());
}

double r_facet(const RewardConfig& config, const CtrModel& model, const FacetList& generated,
               const std::vector<std::string>& reference) {
    const double coverage = facet_coverage(names_of(generated), reference);
    double ctr = 0.0;
    for (const auto& f : generated) ctr += predicted_ctr(model, f);
    if (!generated.empty()) ctr /= static_cast<double>(generated.size());
    return config.alpha * coverage + (1.0 - config.alpha) * ctr;
}

double r_facet(const RewardConfig& config, const CtrModel& model, const FacetList& generated,
               const FacetList& reference) {
    return r_facet(config, model, generated, names_of(reference));
}

double semantic_relevance(const InvertedIndex& index, std::string_view a, std::string_view b) {
    const double n = static_cast<double>(index.doc_count());
    auto vec = [&](std::string_view s) {
        std::map<std::string, double> v;
        for (auto& t : tokenize(s)) {
            const std::size_t df = index.document_frequency(t);
            if (df == 0) continue;
            v[t] += 1.0;
        }
        for (auto& [t, w] : v) w *= std::log((n + 1.0) / (static_cast<double>(index.document_frequency(t)) + 1.0)) + 1.0;
        return v;
    };
    const auto va = vec(a), vb = vec(b);
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [t, w] : va) {
        na += w * w;
        auto it = vb.find(t);
        if (it != vb.end()) dot += w * it->second;
    }
    for (const auto& [t, w] : vb) nb += w * w;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
}

double target_recall(const std::vector<RankedResult>& docs, const LatentIntent& intent, std::size_t k) {
    if (intent.target_docs.empty()) throw std::invalid_argument("intent has no target documents");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < docs.size() && i < k; ++i)
        hits += std::binary_search(intent.target_docs.begin(), intent.target_docs.end(), docs[i].doc_id);
    return static_cast<double>(hits) / static_cast<double>(intent.target_docs.size());
}

double results_utility(const RewardConfig& config, const InvertedIndex& index, const std::vector<RankedResult>& docs,
                       std::string_view query_text, const LatentIntent& intent) {
    return config.w_recall * target_recall(docs, intent, config.k_eval) +
           config.w_sem * semantic_relevance(index, query_text, intent.description);
}

double r_query(const RewardConfig& config, const InvertedIndex& index, std::string_view rewritten,
               const LatentIntent& intent) {
    if (intent.target_docs.empty()) throw std::invalid_argument("intent has no target documents");
    return results_utility(config, index, search(index, rewritten, config.k_eval), rewritten, intent);
}

}  // namespace genfacet
