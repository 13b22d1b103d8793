#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "genfacet/catalog.hpp"
#include "genfacet/facetgen.hpp"
#include "genfacet/intent.hpp"
#include "genfacet/lexindex.hpp"

namespace genfacet {

struct RewardConfig {
    double alpha = 0.5;     ///< coverage share of R_facet
    double w_recall = 0.7;  ///< R_query mix
    double w_sem = 0.3;
    std::size_t k_eval = 10;

    /// Throws std::invalid_argument when a field is out of range.
    void validate() const;
};

/// Logistic click model over the candidate feature layout.
struct CtrModel {
    std::vector<double> weights = std::vector<double>(kFacetFeatureDim, 0.0);

    bool operator==(const CtrModel&) const = default;
};

struct CtrExample {
    std::vector<double> features;
    bool clicked = false;
};

/// |generated ∩ reference| / |reference| over names. Throws on an empty reference.
double facet_coverage(const std::vector<std::string>& generated, const std::vector<std::string>& reference);
double facet_coverage(const FacetList& generated, const FacetList& reference);

double predicted_ctr(const CtrModel& model, const std::vector<double>& features);
inline double predicted_ctr(const CtrModel& model, const Facet& facet) { return predicted_ctr(model, facet.features); }

/// L2-regularized logistic regression fitted by Newton steps; deterministic.
CtrModel fit_ctr_model(const std::vector<CtrExample>& examples, double l2 = 1e-3, std::size_t max_iter = 50);

/// Mean negative log-likelihood.
double log_loss(const CtrModel& model, const std::vector<CtrExample>& examples);

/// alpha * coverage + (1 - alpha) * mean predicted CTR of the generated facets.
double r_facet(const RewardConfig& config, const CtrModel& model, const FacetList& generated,
               const std::vector<std::string>& reference);
double r_facet(const RewardConfig& config, const CtrModel& model, const FacetList& generated,
               const FacetList& reference);

/// Cosine of tf-idf vectors, idf = ln((N+1)/(df+1)) + 1 over the index vocabulary;
/// terms outside the vocabulary are ignored. 0 when either vector is zero.
double semantic_relevance(const InvertedIndex& index, std::string_view a, std::string_view b);

/// Share of the intent's targets in the top k of `docs`.
double target_recall(const std::vector<RankedResult>& docs, const LatentIntent& intent, std::size_t k);

/// w_recall * recall@k_eval(q') + w_sem * semantic_relevance(q', description).
/// Throws std::invalid_argument when the intent has no targets.
double r_query(const RewardConfig& config, const InvertedIndex& index, std::string_view rewritten,
               const LatentIntent& intent);

/// Downstream utility U(q'); the serving-time name for r_query.
inline double search_utility(const RewardConfig& config, const InvertedIndex& index, std::string_view rewritten,
                             const LatentIntent& intent) {
    return r_query(config, index, rewritten, intent);
}

/// Same mix, scoring an already retrieved list (boolean-filter results, for instance).
double results_utility(const RewardConfig& config, const InvertedIndex& index, const std::vector<RankedResult>& docs,
                       std::string_view query_text, const LatentIntent& intent);

}  // namespace genfacet
