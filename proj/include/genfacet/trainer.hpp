#pragma once

// Oracle distillation, multi-task supervised fitting, and group-relative policy
// optimization of the facet and rewrite heads.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "genfacet/facetgen.hpp"
#include "genfacet/pipeline.hpp"
#include "genfacet/reward.hpp"
#include "genfacet/rewrite.hpp"
#include "genfacet/usersim.hpp"

namespace genfacet {

/// Both task heads. Flattened layout: facet weights, then rewrite weights.
struct PolicyParams {
    FacetPolicyParams facet = zero_facet_params();
    RewritePolicyParams rewrite = zero_rewrite_params();

    std::size_t dim() const noexcept { return facet.weights.size() + rewrite.weights.size(); }
    std::vector<double> flatten() const;
    void assign(std::span<const double> flat);
    bool finite() const;
    bool operator==(const PolicyParams&) const = default;
};

// ---- oracle teacher ----

/// Information gain about target membership from observing the attribute's value
/// (absent is a value) over `results`.
double information_gain(const std::vector<RankedResult>& results, const Catalog& catalog,
                        const std::string& attribute, const std::vector<std::string>& sorted_targets);

struct OracleLabel {
    FacetList facets;
    /// Present when the top gold facet is an open constraint: the click it stands for,
    /// the rewrite context, the enumerated actions and the best one.
    std::optional<FacetSelection> selection;
    RewriteContext rewrite_context;
    std::vector<RewriteAction> actions;
    std::size_t gold_action = 0;
    std::vector<double> action_utilities;  ///< r_query of every action
};

/// Gold facets are the open constraints ordered by information gain over the top
/// `result_depth` results of `query` (ties by Gini impurity, then name; all-zero gain
/// falls back to prior order). With nothing open, category attributes by prior.
/// The gold rewrite maximizes r_query for (gold[0], required value), ties by enumeration order.
OracleLabel oracle_teacher(const Environment& env, const LatentIntent& intent, const std::string& query,
                           const std::vector<FacetSelection>& history, const RewardConfig& reward = {},
                           std::size_t result_depth = kDefaultResultDepth);

/// Shows gold facets and applies gold rewrites; defines the benchmark ceiling.
class OraclePipeline final : public SearchPipeline {
public:
    explicit OraclePipeline(RewardConfig reward = {}) : reward_(reward) {}
    FacetList facets(const TurnInput& in) const override;
    Refinement refine(const TurnInput& in, const FacetSelection& selection) const override;

private:
    RewardConfig reward_;
};

// ---- distillation ----

/// A point inside a session: query and clicks so far.
struct TrainingState {
    SessionSpec session;
    std::string query;
    std::vector<FacetSelection> history;
};

/// Fresh intent and user, then 0..|constraints|-1 oracle clicks, sometimes with a
/// stray wrong-value click mixed in so slot replacement has something to fix.
TrainingState sample_training_state(const Environment& env, Rng& rng, const RewardConfig& reward = {},
                                    double trend_boost = SimulatorConfig{}.trend_boost);

struct DistillRecord {
    std::string session_id;
    LatentIntent intent;
    SessionContext context;
    std::vector<CandidateFacet> candidates;
    std::vector<std::string> gold_facets;
    RewriteContext rewrite_context;
    std::vector<RewriteAction> actions;
    std::size_t gold_action = 0;
};

/// Empty string when the record is usable for training, else the first problem found.
std::string validate_record(const DistillRecord& r, const KnowledgeGraph& kg);

/// n records from states drawn with derive_seed(seed, {i}); every record passes validate_record.
std::vector<DistillRecord> build_distill_dataset(const Environment& env, std::size_t n, std::uint64_t seed,
                                                 const RewardConfig& reward = {});

void save_distill_dataset(const std::vector<DistillRecord>& data, const std::filesystem::path& path);
std::vector<DistillRecord> load_distill_dataset(const std::filesystem::path& path);

// ---- supervised fitting ----

/// -log P(gold facets) - lambda * log P(gold action). Throws std::invalid_argument when
/// the gold is not reachable from the record's candidates or actions.
double sft_loss(const PolicyParams& params, const DistillRecord& record, double lambda);
/// Adds scale * d sft_loss / d flat-params into grad.
void sft_loss_grad(const PolicyParams& params, const DistillRecord& record, double lambda, double scale,
                   std::span<double> grad);

enum class TaskMask { both, facet_only, rewrite_only };

struct SftConfig {
    double lambda = 1.0;
    double learning_rate = 0.5;
    std::size_t iterations = 3;  ///< full-batch gradient steps; a short warm start, see README
    TaskMask tasks = TaskMask::both;
};

class TrainingDivergence : public std::runtime_error {
public:
    TrainingDivergence(const std::string& what, PolicyParams last_good, std::size_t iteration)
        : std::runtime_error(what), last_good_(std::move(last_good)), iteration_(iteration) {}
    const PolicyParams& last_good() const noexcept { return last_good_; }
    std::size_t iteration() const noexcept { return iteration_; }

private:
    PolicyParams last_good_;
    std::size_t iteration_;
};

struct SftResult {
    PolicyParams params;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

double mean_sft_loss(const PolicyParams& params, const std::vector<DistillRecord>& data, double lambda,
                     TaskMask tasks = TaskMask::both);

/// Full-batch gradient descent on the mean loss. Throws std::invalid_argument on an empty
/// dataset and TrainingDivergence on a non-finite loss.
SftResult train_sft(const PolicyParams& init, const std::vector<DistillRecord>& data, const SftConfig& config);

// ---- group-relative optimization ----

/// (r - mean) / population std; all zeros when std < 1e-12. Throws when fewer than 2 rewards.
std::vector<double> compute_advantages(std::span<const double> rewards);

/// KL between the two policies' distributions over actions or length-k facet lists.
double kl_divergence(const LinearPolicy& p, const LinearPolicy& ref, const FeatureMatrix& rows, std::size_t k = 1);

struct RolloutSample {
    std::vector<std::size_t> facet_order;  ///< empty when the facet head is not trained here
    FeatureMatrix action_rows;             ///< empty when no rewrite happened
    std::size_t action = 0;
    double logp_old = 0.0;
    double reward = 0.0;
    double advantage = 0.0;
};

struct GroupRollout {
    FeatureMatrix facet_rows;
    std::size_t facet_k = 0;
    std::vector<RolloutSample> samples;

    /// Fills advantages from rewards.
    void normalize();
    /// Recomputes logp_old under `old`.
    void set_old_policy(const PolicyParams& old);
};

/// log pi(o) of one sample: facet list log-prob plus rewrite log-prob.
double rollout_logprob(const PolicyParams& params, const GroupRollout& group, const RolloutSample& s);

/// Mean over groups of (1/G) sum_i ratio_i A_i - beta * KL, where ratio_i = pi(o_i)/pi_old(o_i)
/// and KL = facet-list KL + mean rewrite KL over the sampled rewrite contexts. With
/// clip_epsilon, each term becomes min(ratio A, clip(ratio, 1-eps, 1+eps) A).
/// When grad is non-empty, adds d objective / d flat-params into it.
double grpo_objective(const PolicyParams& params, const PolicyParams& ref, const std::vector<GroupRollout>& groups,
                      double beta, std::optional<double> clip_epsilon = std::nullopt, std::span<double> grad = {});

/// KL part of the objective alone, averaged over groups.
double grpo_kl(const PolicyParams& params, const PolicyParams& ref, const std::vector<GroupRollout>& groups);

struct TrainConfig {
    double lambda = 1.0;
    std::size_t group_size = 8;
    double beta = 0.04;
    double learning_rate = 0.05;
    std::size_t iterations = 500;
    std::optional<double> clip_epsilon;
    std::uint64_t seed = 1;
    std::size_t sessions_per_iteration = 16;
    std::size_t facet_count = kDefaultFacetCount;
    unsigned threads = 0;  ///< rollout workers; 0 = hardware concurrency
    TaskMask tasks = TaskMask::both;

    void validate() const;
};

/// Everything a rollout needs besides the policy.
struct GrpoEnvironment {
    const Environment& env;
    CtrModel ctr;
    RewardConfig reward;
    SimulatorConfig sim;
};

struct IterationLog {
    std::size_t iter = 0;
    double mean_reward = 0.0;
    double kl = 0.0;
    double loss = 0.0;
};

struct GrpoResult {
    PolicyParams params;
    PolicyParams reference;
    std::vector<IterationLog> log;
};

/// Rollouts for one iteration, sampled under `old`. Session s, member i draws from
/// derive_seed(seed, {iter, s, i}); parallel and sequential schedules agree exactly.
std::vector<GroupRollout> collect_rollouts(const PolicyParams& old, const GrpoEnvironment& genv,
                                           const TrainConfig& config, std::size_t iter);

/// reference := init (frozen). Each iteration snapshots the old policy, collects
/// rollouts and takes one ascent step on grpo_objective.
GrpoResult train_grpo(const PolicyParams& init, const GrpoEnvironment& genv, const TrainConfig& config);

std::string training_log_jsonl(const std::vector<IterationLog>& log);

// ---- checkpoints ----

std::string config_hash(const TrainConfig& config);

struct Checkpoint {
    PolicyParams params;
    CtrModel ctr;
    std::string config_hash;
};

std::string checkpoint_to_text(const Checkpoint& c);
Checkpoint checkpoint_from_text(const std::string& text);
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace genfacet
