#pragma once

// Concrete search pipelines: the trained policy pair and the two static baselines.

#include <vector>

#include "genfacet/facetgen.hpp"
#include "genfacet/rewrite.hpp"
#include "genfacet/usersim.hpp"

namespace genfacet {

/// How a facet click reaches the retrieval engine.
enum class RetrievalMode { generative, boolean };

std::string_view to_string(RetrievalMode m);
std::optional<RetrievalMode> parse_retrieval_mode(std::string_view s);

/// Generative mode rewrites the query (argmax) and searches it; boolean mode keeps the
/// query and hard-filters its results by every selection so far.
Refinement refine_query(const TurnInput& in, const FacetSelection& selection, RetrievalMode mode,
                        const RewritePolicyParams& rewrite);

class PolicyPipeline final : public SearchPipeline {
public:
    PolicyPipeline(FacetPolicyParams facet, RewritePolicyParams rewrite, RetrievalMode mode = RetrievalMode::generative)
        : facet_(std::move(facet)), rewrite_(std::move(rewrite)), mode_(mode) {}

    FacetList facets(const TurnInput& in) const override;
    Refinement refine(const TurnInput& in, const FacetSelection& selection) const override {
        return refine_query(in, selection, mode_, rewrite_);
    }

private:
    FacetPolicyParams facet_;
    RewritePolicyParams rewrite_;
    RetrievalMode mode_;
};

/// Static category-attribute list by prior.
class RulePipeline final : public SearchPipeline {
public:
    explicit RulePipeline(RetrievalMode mode = RetrievalMode::boolean) : mode_(mode) {}
    FacetList facets(const TurnInput& in) const override;
    Refinement refine(const TurnInput& in, const FacetSelection& selection) const override {
        return refine_query(in, selection, mode_, zero_rewrite_params());
    }

private:
    RetrievalMode mode_;
};

/// Attributes of the current results by Gini impurity.
class GiniPipeline final : public SearchPipeline {
public:
    explicit GiniPipeline(RetrievalMode mode = RetrievalMode::boolean) : mode_(mode) {}
    FacetList facets(const TurnInput& in) const override;
    Refinement refine(const TurnInput& in, const FacetSelection& selection) const override {
        return refine_query(in, selection, mode_, zero_rewrite_params());
    }

private:
    RetrievalMode mode_;
};

}  // namespace genfacet
