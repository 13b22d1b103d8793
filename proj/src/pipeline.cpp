#include "genfacet/pipeline.hpp"

namespace genfacet {

std::string_view to_string(RetrievalMode m) { return m == RetrievalMode::generative ? "generative" : "boolean"; }

std::optional<RetrievalMode> parse_retrieval_mode(std::string_view s) {
    if (s == "generative") return RetrievalMode::generative;
    if (s == "boolean") return RetrievalMode::boolean;
    return std::nullopt;
}

Refinement refine_query(const TurnInput& in, const FacetSelection& selection, RetrievalMode mode,
                        const RewritePolicyParams& rewrite) {
    Refinement out;
    if (mode == RetrievalMode::boolean) {
        std::vector<FacetSelection> all = in.history;
        all.push_back(selection);
        out.query = in.ctx.query;
        out.results = boolean_filter(in.env.index(), in.env.catalog(), out.query, all, in.result_depth);
        return out;
    }
    RewriteContext rw{in.ctx.query, selection, in.history};
    out.query = rewrite_query(rewrite, rw, in.env.kg(), DecodeMode::argmax).query;
    out.results = search(in.env.index(), out.query, in.result_depth);
    return out;
}

FacetList PolicyPipeline::facets(const TurnInput& in) const {
    const auto cands = mine_candidates(in.ctx, in.env.kg(), in.env.index(), in.env.catalog(), in.result_depth);
    return rank_facets(facet_, cands, in.facet_count);
}

FacetList RulePipeline::facets(const TurnInput& in) const {
    auto cat = in.env.category_of_query(in.ctx.query);
    return cat ? rule_based_facets(in.env.kg(), *cat, in.facet_count) : FacetList{};
}

FacetList GiniPipeline::facets(const TurnInput& in) const {
    return gini_rank_facets(in.results, in.env.catalog(), in.facet_count);
}

}  // namespace genfacet
