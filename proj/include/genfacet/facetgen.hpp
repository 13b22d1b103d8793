#pragma once

// Facet list generation: candidate mining, the trainable list policy, and the
// static baselines it is compared against.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "genfacet/catalog.hpp"
#include "genfacet/context.hpp"
#include "genfacet/lexindex.hpp"
#include "genfacet/policy.hpp"
#include "genfacet/rng.hpp"

namespace genfacet {

class LlmClient;

/// Candidate feature layout.
enum FacetFeature : std::size_t {
    kFeatPrior = 0,
    kFeatLexical,
    kFeatBehavior,
    kFeatTrend,
    kFeatEntropy,
    kFeatBias,
    kFacetFeatureDim
};

struct Facet {
    std::string name;
    std::vector<std::string> values;
    double score = 0.0;
    std::vector<double> features;  ///< empty for facets not produced by the policy

    bool operator==(const Facet&) const = default;
};

using FacetList = std::vector<Facet>;

using FacetPolicyParams = LinearPolicy;

inline FacetPolicyParams zero_facet_params() { return {std::vector<double>(kFacetFeatureDim, 0.0), 1.0}; }

struct CandidateFacet {
    std::string name;
    std::vector<std::string> values;
    std::vector<double> features;  ///< kFacetFeatureDim entries, bias last

    bool operator==(const CandidateFacet&) const = default;
};

inline constexpr std::size_t kDefaultFacetCount = 10;
inline constexpr std::size_t kDefaultResultDepth = 100;

/// One candidate per kg_view attribute plus attributes whose values appear in a
/// trend term; sorted by name. `catalog` resolves behavior product ids.
std::vector<CandidateFacet> mine_candidates(const SessionContext& ctx, const KnowledgeGraph& kg,
                                            const InvertedIndex& index, const Catalog& catalog,
                                            std::size_t result_depth = kDefaultResultDepth);

/// Entropy of the attribute's value distribution (absent counts as a bucket)
/// over `results`, divided by ln(|values| + 1).
double normalized_value_entropy(const std::vector<RankedResult>& results, const Catalog& catalog,
                                const std::string& attribute, std::size_t num_values);

FeatureMatrix feature_matrix(const std::vector<CandidateFacet>& candidates);

struct FacetSample {
    FacetList facets;
    std::vector<std::size_t> order;  ///< candidate indices
    double log_prob = 0.0;
};

/// Plackett-Luce draw of k distinct candidates. Throws std::invalid_argument if k > |candidates|.
FacetSample sample_facet_list(const FacetPolicyParams& params, const std::vector<CandidateFacet>& candidates,
                              std::size_t k, Rng& rng);

/// Candidate indices of `names`; throws std::invalid_argument on unknown or repeated names.
std::vector<std::size_t> candidate_order(const std::vector<CandidateFacet>& candidates,
                                         const std::vector<std::string>& names);

double list_logprob(const FacetPolicyParams& params, const std::vector<CandidateFacet>& candidates,
                    const FacetList& list);

/// Deterministic top-k by score, ties by name. Used for serving and evaluation.
FacetList rank_facets(const FacetPolicyParams& params, const std::vector<CandidateFacet>& candidates, std::size_t k);

/// Top-k attributes of a category by prior, ties by name. Unknown category gives [].
FacetList rule_based_facets(const KnowledgeGraph& kg, const std::string& category, std::size_t k);

/// Attributes of the result documents ranked by Gini impurity, descending, ties by name.
FacetList gini_rank_facets(const std::vector<RankedResult>& results, const Catalog& catalog, std::size_t k);

double gini_impurity(const std::vector<RankedResult>& results, const Catalog& catalog, const std::string& attribute);

// ---- external generator path ----

class LlmParseError : public std::runtime_error {
public:
    LlmParseError(const std::string& what, std::string raw)
        : std::runtime_error(what), raw_(std::move(raw)) {}
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

struct LlmFacetResult {
    FacetList facets;
    std::size_t dropped = 0;  ///< facets removed because their name is not a KG attribute
};

/// Accepts a JSON array of {"name","values"} objects, or an object holding one under
/// "facets", possibly surrounded by prose or a code fence.
LlmFacetResult parse_llm_facets(const std::string& text, const KnowledgeGraph& kg);

LlmFacetResult llm_generate_facets(LlmClient& client, const std::string& prompt, const KnowledgeGraph& kg);

}  // namespace genfacet
