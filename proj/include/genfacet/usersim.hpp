#pragma once

// Simulated shoppers: latent intents, correlated user context, a position-biased
// facet click model, and multi-turn sessions against a search pipeline.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "genfacet/catalog.hpp"
#include "genfacet/context.hpp"
#include "genfacet/facetgen.hpp"
#include "genfacet/intent.hpp"
#include "genfacet/lexindex.hpp"
#include "genfacet/reward.hpp"
#include "genfacet/rng.hpp"

namespace genfacet {

/// Catalog, graph, index and trend provider bundled for simulation and training.
/// Immutable after construction; safe to share across threads.
class Environment {
public:
    /// Builds the index unless one is given; a given index must cover exactly the catalog.
    Environment(Catalog catalog, KnowledgeGraph kg, std::shared_ptr<const KnowledgeProvider> provider,
                std::optional<InvertedIndex> index = std::nullopt);

    /// Generates the catalog and wires a stub provider built from make_trend_table.
    static Environment synthetic(const CatalogConfig& config);

    const Catalog& catalog() const noexcept { return catalog_; }
    const KnowledgeGraph& kg() const noexcept { return kg_; }
    const InvertedIndex& index() const noexcept { return index_; }
    const std::shared_ptr<const KnowledgeProvider>& provider() const noexcept { return provider_; }

    /// Catalog positions of the products in a category.
    const std::vector<std::size_t>& products_in(const std::string& category) const;
    /// Category attributes whose values the provider reports as trending for the category word.
    const std::vector<std::string>& trending_attributes(const std::string& category) const;
    /// First query token naming a category.
    std::optional<std::string> category_of_query(const std::string& query) const;

    /// Context for a turn; the provider is called inline so simulation stays deterministic.
    SessionContext context(const std::string& query, const Profile& profile,
                           const std::vector<BehaviorEvent>& behaviors) const;

private:
    Catalog catalog_;
    KnowledgeGraph kg_;
    InvertedIndex index_;
    std::shared_ptr<const KnowledgeProvider> provider_;
    std::map<std::string, std::vector<std::size_t>> by_category_;
    std::map<std::string, std::vector<std::string>> trending_;
};

struct ClickModelConfig {
    double p_match = 0.9;
    double gamma = 0.85;
    double p_noise = 0.02;
};

struct SimulatorConfig {
    ClickModelConfig click;
    std::size_t max_turns = 4;
    std::size_t conversion_depth = 10;
    std::size_t facet_count = kDefaultFacetCount;
    std::size_t result_depth = kDefaultResultDepth;
    bool stop_on_conversion = false;
    double trend_boost = 0.35;  ///< chance an intent includes a trending attribute
};

/// Throws std::invalid_argument when the catalog is empty.
LatentIntent sample_intent(const Environment& env, Rng& rng, double trend_boost = SimulatorConfig{}.trend_boost);
/// Same without trend information.
LatentIntent sample_intent(const Catalog& catalog, const KnowledgeGraph& kg, Rng& rng);

/// Products of `category` that carry every constraint, sorted by id.
std::vector<std::string> matching_products(const Catalog& catalog, const std::string& category,
                                           const std::map<std::string, std::string>& constraints);
std::string intent_description(const std::string& category, const std::map<std::string, std::string>& constraints);

struct UserContext {
    Profile profile;
    std::vector<BehaviorEvent> behaviors;

    bool operator==(const UserContext&) const = default;
};

/// Profile tags and recent behaviors correlated with the intent, plus noise.
UserContext sample_user_context(const Environment& env, const LatentIntent& intent, Rng& rng);

struct Click {
    std::size_t position = 0;  ///< 1-based
    FacetSelection selection;
    bool matched = false;  ///< true when the click serves an unsatisfied constraint

    bool operator==(const Click&) const = default;
};

/// Constraints not yet selected with their required value (latest selection wins).
std::vector<std::string> unsatisfied_constraints(const LatentIntent& intent,
                                                 const std::vector<FacetSelection>& history);

std::optional<Click> click_decision(const LatentIntent& intent, const FacetList& facets,
                                    const std::vector<FacetSelection>& history, const ClickModelConfig& config,
                                    Rng& rng);
inline std::optional<Click> click_decision(const LatentIntent& intent, const FacetList& facets, Rng& rng) {
    return click_decision(intent, facets, {}, ClickModelConfig{}, rng);
}

// ---- sessions ----

struct TurnInput {
    const Environment& env;
    const LatentIntent& intent;  ///< only the oracle pipeline may look at this
    const SessionContext& ctx;
    const std::vector<FacetSelection>& history;
    const std::vector<RankedResult>& results;  ///< current results
    std::size_t facet_count;
    std::size_t result_depth;
};

struct Refinement {
    std::string query;
    std::vector<RankedResult> results;
};

/// Facet generation plus click handling. Implementations must be deterministic and
/// safe to call concurrently.
class SearchPipeline {
public:
    virtual ~SearchPipeline() = default;
    virtual FacetList facets(const TurnInput& in) const = 0;
    virtual Refinement refine(const TurnInput& in, const FacetSelection& selection) const = 0;
};

struct Turn {
    std::string query;
    FacetList facets;
    std::optional<Click> click;
    std::string rewritten;               ///< query after the turn (unchanged without a click)
    std::vector<std::string> top_docs;   ///< top conversion_depth ids after the turn
    bool converted = false;
};

struct SessionLog {
    std::string session_id;
    LatentIntent intent;
    UserContext user;
    std::string initial_query;
    std::vector<std::string> initial_docs;
    std::vector<Turn> turns;
    bool converted = false;

    /// Ranking shown after the last turn (the initial one when there were no turns).
    const std::vector<std::string>& final_docs() const {
        return turns.empty() ? initial_docs : turns.back().top_docs;
    }
    std::size_t clicks() const;
};

SessionLog run_session(const Environment& env, const SearchPipeline& pipeline, const LatentIntent& intent,
                       const UserContext& user, const SimulatorConfig& config, Rng& rng);

struct SessionSpec {
    std::string session_id;
    LatentIntent intent;
    UserContext user;
};

/// Runs every session with its own stream derive_seed(seed, {i}); output order and
/// content do not depend on `threads`.
std::vector<SessionLog> run_sessions(const Environment& env, const SearchPipeline& pipeline,
                                     const std::vector<SessionSpec>& sessions, const SimulatorConfig& config,
                                     std::uint64_t seed, unsigned threads = 0);

/// Fresh intents and contexts, session i drawn from derive_seed(seed, {i}).
std::vector<SessionSpec> sample_sessions(const Environment& env, std::size_t n, std::uint64_t seed,
                                         double trend_boost = SimulatorConfig{}.trend_boost);

// ---- flywheel ----

struct PreferencePair {
    std::string session_id;
    std::size_t turn = 0;
    std::string query;
    Facet positive;
    Facet negative;
};

/// One pair per (clicked facet, shown-but-not-clicked facet) in each clicked turn.
std::vector<PreferencePair> harvest_preferences(const std::vector<SessionLog>& logs);

/// Pointwise impressions recovered from pairs: each clicked facet once, each skipped one once.
std::vector<CtrExample> ctr_examples(const std::vector<PreferencePair>& pairs);

struct EngagementStats {
    double ctr = 0.0;
    double ucvr = 0.0;
};

EngagementStats simulated_ctr_ucvr(const std::vector<SessionLog>& logs);

/// One JSON object per line: {"session_id","type","payload"} with types
/// intent, initial, turn, end.
std::string session_logs_to_jsonl(const std::vector<SessionLog>& logs);
void save_session_logs(const std::vector<SessionLog>& logs, const std::filesystem::path& path);

}  // namespace genfacet
