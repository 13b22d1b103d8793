#pragma once

// Ranking metrics, the synthetic benchmark, and the baseline/ablation report.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "genfacet/facetgen.hpp"
#include "genfacet/trainer.hpp"
#include "genfacet/usersim.hpp"

namespace genfacet {

// ---- metrics ----

/// Name-level hits in the top k over k. Throws std::invalid_argument when k == 0.
double precision_at_k(const std::vector<std::string>& generated, const std::vector<std::string>& gold, std::size_t k);
/// Name-level hits in the top k over |gold|. Throws when gold is empty or k == 0.
double recall_at_k(const std::vector<std::string>& generated, const std::vector<std::string>& gold, std::size_t k);
double precision_at_k(const FacetList& generated, const FacetList& gold, std::size_t k);
double recall_at_k(const FacetList& generated, const FacetList& gold, std::size_t k);

/// Missing docs have grade 0. IDCG is taken over every grade in `grades`; 0 when it is 0.
double ndcg_at_k(const std::vector<std::string>& ranked, const std::map<std::string, double>& grades, std::size_t k);

std::vector<std::string> facet_names(const FacetList& facets);

// ---- benchmark ----

struct BenchmarkSession {
    SessionSpec spec;
    SessionContext context;                ///< context of the first turn
    std::vector<std::string> gold_facets;  ///< non-empty
    std::string gold_rewrite;              ///< best rewrite of the first oracle click
    std::map<std::string, double> grades;  ///< 1 for every target doc
};

/// Intents and users from sample_sessions(env, n, seed), labels from oracle_teacher.
std::vector<BenchmarkSession> build_benchmark(const Environment& env, std::size_t n, std::uint64_t seed);

// ---- report ----

struct SystemMetrics {
    double p_at_10 = 0.0;
    double r_at_10 = 0.0;
    double ndcg_at_10 = 0.0;
    double ctr = 0.0;
    double ucvr = 0.0;
};

struct ReportRow {
    std::string system;
    SystemMetrics metrics;
    /// (x - base) / base per metric; nullopt when the base value is 0.
    std::map<std::string, std::optional<double>> delta;
};

struct Report {
    std::string baseline;
    std::vector<ReportRow> rows;

    const ReportRow* find(const std::string& system) const;
    std::string to_text() const;
    std::string to_json() const;
};

/// (x - base) / base for every row and metric. Throws when the baseline row is missing.
void fill_deltas(Report& report);

/// Row identifiers in report order, with their display names.
struct AblationRow {
    const char* id;
    const char* display;
};
const std::vector<AblationRow>& ablation_rows();
/// Resolves an id or display name; nullopt when unknown.
std::optional<std::string> resolve_ablation_row(const std::string& name);

/// Trained parameters each learned row needs.
struct TrainedArtifacts {
    std::optional<PolicyParams> full;      ///< multi-task SFT then joint GRPO
    std::optional<PolicyParams> sft_only;  ///< w/o GRPO
    std::optional<PolicyParams> separate;  ///< w/o multi-task SFT
};

struct SuiteOptions {
    SimulatorConfig sim;
    std::uint64_t seed = 1;  ///< session streams; shared by every row
    unsigned threads = 0;
    std::vector<std::string> rows;  ///< ids; empty = all
};

/// Metrics of one pipeline over the benchmark: P/R@10 on the first turn's facets,
/// nDCG@10 on the final ranking, simulated CTR/UCVR.
SystemMetrics evaluate_pipeline(const Environment& env, const SearchPipeline& pipeline,
                                const std::vector<BenchmarkSession>& bench, const SuiteOptions& options);

/// Deltas against "rule-based" (added to the run when not requested). Throws
/// std::invalid_argument naming the row when its parameters are missing.
Report run_ablation_suite(const Environment& env, const std::vector<BenchmarkSession>& bench,
                          const TrainedArtifacts& artifacts, const SuiteOptions& options);

// ---- standard experiment ----

struct ExperimentConfig {
    CatalogConfig catalog;  ///< environment recipe; callers set its seed
    std::size_t benchmark_sessions = 1000;
    std::size_t flywheel_sessions = 300;
    std::size_t distill_records = 400;
    SftConfig sft;
    TrainConfig train;  ///< seed is overridden by the experiment seed
    SimulatorConfig sim;
    RewardConfig reward;
    std::size_t reward_eval_sessions = 100;
    unsigned threads = 0;
};

struct ExperimentResult {
    CtrModel ctr;
    double ctr_heldout_logloss = 0.0;
    PolicyParams sft;
    GrpoResult grpo;
    PolicyParams separate;
    double sft_reward = 0.0;   ///< mean sampled combined reward of the SFT policy
    double grpo_reward = 0.0;  ///< same for the GRPO policy
    Report report;
};

/// Distillation and SFT; two flywheel cycles (rule pipeline, then the SFT policy)
/// fit the click model; joint GRPO and the separate-task run follow; all rows are
/// then evaluated.
ExperimentResult run_standard_experiment(const Environment& env, const ExperimentConfig& config, std::uint64_t seed);

/// Pointwise click examples from one flywheel cycle: sessions served by `pipeline`,
/// every fifth session held out.
struct FlywheelHarvest {
    std::vector<CtrExample> fit;
    std::vector<CtrExample> heldout;
};
FlywheelHarvest harvest_flywheel(const Environment& env, const SearchPipeline& pipeline, std::size_t sessions,
                                 std::uint64_t seed, const SimulatorConfig& sim, unsigned threads = 0);
/// Refits the click model on every cycle so far; held-out log-loss through `heldout`.
CtrModel fit_flywheel(const std::vector<FlywheelHarvest>& cycles, double* heldout = nullptr);

/// Mean combined reward of sampled trajectories on a fixed set of held-out states.
double mean_policy_reward(const PolicyParams& params, const GrpoEnvironment& genv, std::size_t sessions,
                          std::uint64_t seed, unsigned threads = 0);

/// Per-task SFT on the same data followed by per-task GRPO.
PolicyParams train_separate(const PolicyParams& init, const std::vector<DistillRecord>& data,
                            const GrpoEnvironment& genv, const SftConfig& sft, const TrainConfig& train);

}  // namespace genfacet
