#pragma once

// Log-linear choice models shared by the facet and rewrite policies.
//
// A policy scores item i as s_i = w . f_i / T. A list is drawn by repeated
// softmax selection without replacement (Plackett-Luce); a single softmax
// choice is the one-step case. All log-probabilities here are exact.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "genfacet/rng.hpp"

namespace genfacet {

using FeatureMatrix = std::vector<std::vector<double>>;

/// Weights plus temperature; the common shape of both task heads.
struct LinearPolicy {
    std::vector<double> weights;
    double temperature = 1.0;

    /// Throws std::invalid_argument on non-finite weights or temperature <= 0.
    void validate() const;
    bool operator==(const LinearPolicy&) const = default;
};

std::vector<double> policy_scores(const LinearPolicy& policy, const FeatureMatrix& rows);

double log_sum_exp(std::span<const double> xs);

/// log P(order) for the first order.size() picks. order entries must be distinct.
double pl_log_prob(const LinearPolicy& policy, const FeatureMatrix& rows, std::span<const std::size_t> order);

/// Adds scale * d log P(order) / d weights into grad.
void pl_log_prob_grad(const LinearPolicy& policy, const FeatureMatrix& rows, std::span<const std::size_t> order,
                      double scale, std::span<double> grad);

/// Draws k distinct items. Throws std::invalid_argument when k > rows.size().
std::vector<std::size_t> pl_sample(const LinearPolicy& policy, const FeatureMatrix& rows, std::size_t k, Rng& rng);

/// Indices sorted by score descending; ties keep input order.
std::vector<std::size_t> pl_argmax(const LinearPolicy& policy, const FeatureMatrix& rows, std::size_t k);

/// Largest candidate set for which list KL is computed over the full list
/// distribution; bigger sets use the first-step softmax KL.
inline constexpr std::size_t kExactKlMaxItems = 8;

/// KL(p || ref) between the length-k list distributions of two policies over the
/// same rows. When grad is non-empty, adds d KL / d p.weights into it.
double pl_kl(const LinearPolicy& p, const LinearPolicy& ref, const FeatureMatrix& rows, std::size_t k,
             std::span<double> grad = {});

}  // namespace genfacet
