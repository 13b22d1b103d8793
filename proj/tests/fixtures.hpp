#pragma once

// Shared, lazily built environments. Everything here is seeded, so tests that use
// them stay deterministic.

#include "genfacet/trainer.hpp"
#include "genfacet/usersim.hpp"

namespace fixture {

/// 2,000-product synthetic environment.
inline const genfacet::Environment& small_env() {
    static const genfacet::Environment env = [] {
        genfacet::CatalogConfig cfg;
        cfg.num_products = 2000;
        cfg.seed = 17;
        return genfacet::Environment::synthetic(cfg);
    }();
    return env;
}

inline const std::vector<genfacet::DistillRecord>& small_distill() {
    static const auto data = genfacet::build_distill_dataset(small_env(), 150, 4);
    return data;
}

/// Policy fitted on small_distill(); a trained but cheap parameter set.
inline const genfacet::PolicyParams& trained_params() {
    static const genfacet::PolicyParams p = [] {
        genfacet::SftConfig cfg;
        cfg.iterations = 30;
        return genfacet::train_sft(genfacet::PolicyParams{}, small_distill(), cfg).params;
    }();
    return p;
}

}  // namespace fixture
