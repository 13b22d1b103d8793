#pragma once

// Query rewriting as a choice among a few edit operations on the current query.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "genfacet/catalog.hpp"
#include "genfacet/context.hpp"
#include "genfacet/policy.hpp"
#include "genfacet/rng.hpp"

namespace genfacet {

class LlmClient;

enum class RewriteOp { append = 0, replace_slot, expand_synonym, replace_query };

inline constexpr std::size_t kRewriteOpCount = 4;
/// One-hot operator plus the slot-match indicator.
inline constexpr std::size_t kRewriteFeatureDim = kRewriteOpCount + 1;
inline constexpr std::size_t kMaxSynonyms = 2;

std::string_view to_string(RewriteOp op);
std::optional<RewriteOp> parse_rewrite_op(std::string_view s);

struct RewriteAction {
    RewriteOp op = RewriteOp::append;
    std::string value;                  ///< selected value (all ops)
    std::string slot;                   ///< REPLACE_SLOT: query word being replaced
    std::vector<std::string> synonyms;  ///< EXPAND_SYNONYM: sibling values, attached as soft terms
    std::string query;                  ///< REPLACE_QUERY: full replacement
    std::vector<double> features;       ///< filled by enumerate_actions

    bool operator==(const RewriteAction&) const = default;
};

using RewritePolicyParams = LinearPolicy;

inline RewritePolicyParams zero_rewrite_params() { return {std::vector<double>(kRewriteFeatureDim, 0.0), 1.0}; }

/// Order: APPEND, REPLACE_SLOT (if a query word is a value of the selected attribute),
/// EXPAND_SYNONYM (if the attribute has >= 2 values), REPLACE_QUERY (if there is click history).
std::vector<RewriteAction> enumerate_actions(const RewriteContext& ctx, const KnowledgeGraph& kg);

std::string apply_action(std::string_view q, const FacetSelection& selection, const RewriteAction& action);

/// 1 when the hard terms of `q` carry exactly one value of `attribute`, namely `value`.
bool slot_matches(std::string_view q, const std::string& attribute, const std::string& value,
                  const KnowledgeGraph& kg);

FeatureMatrix action_matrix(const std::vector<RewriteAction>& actions);

struct RewriteSample {
    std::size_t index = 0;
    double log_prob = 0.0;
};

/// Softmax draw. Throws std::invalid_argument on an empty action set.
RewriteSample sample_rewrite(const RewritePolicyParams& params, const std::vector<RewriteAction>& actions, Rng& rng);

/// Highest-scoring action, ties by enumeration order.
RewriteSample argmax_rewrite(const RewritePolicyParams& params, const std::vector<RewriteAction>& actions);

double rewrite_logprob(const RewritePolicyParams& params, const std::vector<RewriteAction>& actions,
                       std::size_t index);

enum class DecodeMode { sample, argmax };

struct RewriteResult {
    std::string query;
    double log_prob = 0.0;
    std::size_t action_index = 0;
    std::vector<RewriteAction> actions;
};

/// enumerate_actions, select, apply_action. `rng` is required in sample mode.
RewriteResult rewrite_query(const RewritePolicyParams& params, const RewriteContext& ctx, const KnowledgeGraph& kg,
                            DecodeMode mode, Rng* rng = nullptr);

/// External generator path: renders the rewrite prompt and returns the trimmed reply.
std::string llm_rewrite_query(LlmClient& client, const RewriteContext& ctx);

}  // namespace genfacet
