#pragma once

// One JSON document configures every stage. Unknown keys are rejected.

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>

#include "genfacet/catalog.hpp"
#include "genfacet/evalsuite.hpp"
#include "genfacet/llm_client.hpp"
#include "genfacet/reward.hpp"
#include "genfacet/trainer.hpp"
#include "genfacet/usersim.hpp"

namespace genfacet {

inline constexpr const char* kConfigEnvVar = "GENFACET_CONFIG";

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DataPaths {
    std::filesystem::path catalog = "data/catalog.jsonl";
    std::filesystem::path kg = "data/kg.json";
    std::filesystem::path trends = "data/trends.json";
    std::filesystem::path index = "data/index.gfidx";
    std::filesystem::path distill = "data/distill.jsonl";
    std::filesystem::path params = "data/params.ckpt";
};

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    double cache_ttl_seconds = 300.0;
    std::size_t cache_capacity = 10000;
    double session_idle_seconds = 1800.0;
    std::size_t facet_count = kDefaultFacetCount;
    std::size_t result_depth = kDefaultResultDepth;
    std::chrono::milliseconds provider_deadline = kDefaultProviderDeadline;
};

struct AppConfig {
    DataPaths paths;
    CatalogConfig catalog;
    RewardConfig reward;
    SftConfig sft;
    TrainConfig train;
    SimulatorConfig sim;
    ExperimentConfig experiment;  ///< its reward/sft/train/sim mirror the sections above
    ServiceConfig service;
    std::optional<LlmEndpoint> llm;
    unsigned threads = 0;
};

/// Throws ConfigError on unknown keys, wrong types or invalid values.
AppConfig config_from_json(const std::string& text);
std::string config_to_json(const AppConfig& config);

/// explicit path, else $GENFACET_CONFIG, else defaults.
AppConfig load_config(const std::optional<std::filesystem::path>& explicit_path);

}  // namespace genfacet
