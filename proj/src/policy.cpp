#include "genfacet/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace genfacet {

void LinearPolicy::validate() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature))
        throw std::invalid_argument("policy temperature must be > 0");
    for (double w : weights)
        if (!std::isfinite(w)) throw std::invalid_argument("policy weights must be finite");
}

std::vector<double> policy_scores(const LinearPolicy& policy, const FeatureMatrix& rows) {
    std::vector<double> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != policy.weights.size())
            throw std::invalid_argument("feature dimension " + std::to_string(rows[i].size()) +
                                        " does not match policy dimension " + std::to_string(policy.weights.size()));
        double s = 0.0;
        for (std::size_t j = 0; j < rows[i].size(); ++j) s += policy.weights[j] * rows[i][j];
        out[i] = s / policy.temperature;
    }
    return out;
}

double log_sum_exp(std::span<const double> xs) {
    if (xs.empty()) return -std::numeric_limits<double>::infinity();
    double m = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (double x : xs) acc += std::exp(x - m);
    return m + std::log(acc);
}

namespace {

void check_order(std::size_t n, std::span<const std::size_t> order) {
    std::vector<char> seen(n, 0);
    for (auto i : order) {
        if (i >= n) throw std::invalid_argument("list item out of range");
        if (seen[i]) throw std::invalid_argument("list items must be distinct");
        seen[i] = 1;
    }
}

/// Softmax over the items flagged in `alive`; returns log-normalizer.
double masked_lse(const std::vector<double>& s, const std::vector<char>& alive, std::vector<double>& scratch) {
    scratch.clear();
    for (std::size_t i = 0; i < s.size(); ++i)
        if (alive[i]) scratch.push_back(s[i]);
    return log_sum_exp(scratch);
}

}  // namespace

double pl_log_prob(const LinearPolicy& policy, const FeatureMatrix& rows, std::span<const std::size_t> order) {
    check_order(rows.size(), order);
    auto s = policy_scores(policy, rows);
    std::vector<char> alive(rows.size(), 1);
    std::vector<double> scratch;
    double lp = 0.0;
    for (auto c : order) {
        lp += s[c] - masked_lse(s, alive, scratch);
        alive[c] = 0;
    }
    return lp;
}

void pl_log_prob_grad(const LinearPolicy& policy, const FeatureMatrix& rows, std::span<const std::size_t> order,
                      double scale, std::span<double> grad) {
    check_order(rows.size(), order);
    const std::size_t d = policy.weights.size();
    if (grad.size() != d) throw std::invalid_argument("gradient buffer has wrong dimension");
    auto s = policy_scores(policy, rows);
    std::vector<char> alive(rows.size(), 1);
    std::vector<double> scratch, mean(d);
    for (auto c : order) {
        const double lse = masked_lse(s, alive, scratch);
        std::fill(mean.begin(), mean.end(), 0.0);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (!alive[i]) continue;
            const double p = std::exp(s[i] - lse);
            for (std::size_t j = 0; j < d; ++j) mean[j] += p * rows[i][j];
        }
        for (std::size_t j = 0; j < d; ++j) grad[j] += scale * (rows[c][j] - mean[j]) / policy.temperature;
        alive[c] = 0;
    }
}

std::vector<std::size_t> pl_sample(const LinearPolicy& policy, const FeatureMatrix& rows, std::size_t k, Rng& rng) {
    if (k > rows.size())
        throw std::invalid_argument("cannot draw " + std::to_string(k) + " items from " +
                                    std::to_string(rows.size()) + " candidates");
    auto s = policy_scores(policy, rows);
    std::vector<char> alive(rows.size(), 1);
    std::vector<double> scratch, probs(rows.size());
    std::vector<std::size_t> order;
    order.reserve(k);
    for (std::size_t step = 0; step < k; ++step) {
        const double lse = masked_lse(s, alive, scratch);
        for (std::size_t i = 0; i < rows.size(); ++i) probs[i] = alive[i] ? std::exp(s[i] - lse) : 0.0;
        auto c = rng.weighted(probs);
        order.push_back(c);
        alive[c] = 0;
    }
    return order;
}

std::vector<std::size_t> pl_argmax(const LinearPolicy& policy, const FeatureMatrix& rows, std::size_t k) {
    auto s = policy_scores(policy, rows);
    std::vector<std::size_t> idx(rows.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s[a] > s[b]; });
    idx.resize(std::min(k, idx.size()));
    return idx;
}

namespace {

struct KlSolver {
    const FeatureMatrix& rows;
    std::vector<double> sp, sr;
    double temperature;
    std::size_t n, d, depth;
    bool want_grad;
    std::vector<double> memo_val;
    std::vector<char> memo_done;
    std::vector<double> memo_grad;

    /// KL of the remaining `steps` picks starting from the alive set `mask`.
    double solve(std::uint32_t mask, std::size_t steps, double* grad_out) {
        if (steps == 0 || mask == 0) return 0.0;
        const bool memo = n <= kExactKlMaxItems;
        if (memo && memo_done[mask]) {
            if (grad_out)
                for (std::size_t j = 0; j < d; ++j) grad_out[j] += memo_grad[mask * d + j];
            return memo_val[mask];
        }
        std::vector<double> xp, xr;
        std::vector<std::size_t> items;
        for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1u) {
                items.push_back(i);
                xp.push_back(sp[i]);
                xr.push_back(sr[i]);
            }
        const double lp_norm = log_sum_exp(xp), lr_norm = log_sum_exp(xr);
        std::vector<double> mean(d, 0.0), local(d, 0.0), child_grad(d);
        std::vector<double> p(items.size()), a(items.size());
        double value = 0.0;
        for (std::size_t t = 0; t < items.size(); ++t) {
            const std::size_t c = items[t];
            p[t] = std::exp(sp[c] - lp_norm);
            if (want_grad)
                for (std::size_t j = 0; j < d; ++j) mean[j] += p[t] * rows[c][j];
        }
        for (std::size_t t = 0; t < items.size(); ++t) {
            const std::size_t c = items[t];
            std::fill(child_grad.begin(), child_grad.end(), 0.0);
            const double child =
                steps > 1 ? solve(mask & ~(1u << c), steps - 1, want_grad ? child_grad.data() : nullptr) : 0.0;
            a[t] = (sp[c] - lp_norm) - (sr[c] - lr_norm) + child;
            value += p[t] * a[t];
            if (want_grad)
                for (std::size_t j = 0; j < d; ++j)
                    local[j] += p[t] * ((rows[c][j] - mean[j]) / temperature * a[t] + child_grad[j]);
        }
        if (memo) {
            memo_done[mask] = 1;
            memo_val[mask] = value;
            if (want_grad) std::copy(local.begin(), local.end(), memo_grad.begin() + mask * d);
        }
        if (grad_out)
            for (std::size_t j = 0; j < d; ++j) grad_out[j] += local[j];
        return value;
    }
};

}  // namespace

double pl_kl(const LinearPolicy& p, const LinearPolicy& ref, const FeatureMatrix& rows, std::size_t k,
             std::span<double> grad) {
    if (rows.empty() || k == 0) return 0.0;
    if (p.weights.size() != ref.weights.size()) throw std::invalid_argument("policy dimensions differ");
    if (!grad.empty() && grad.size() != p.weights.size())
        throw std::invalid_argument("gradient buffer has wrong dimension");
    const std::size_t n = rows.size();
    KlSolver solver{rows, policy_scores(p, rows), policy_scores(ref, rows), p.temperature, n, p.weights.size(),
                    std::min(k, n), !grad.empty(), {}, {}, {}};
    const bool exact = n <= kExactKlMaxItems;
    if (exact) {
        solver.memo_val.assign(std::size_t{1} << n, 0.0);
        solver.memo_done.assign(std::size_t{1} << n, 0);
        if (solver.want_grad) solver.memo_grad.assign((std::size_t{1} << n) * solver.d, 0.0);
    }
    if (exact) {
        const auto full = static_cast<std::uint32_t>((std::size_t{1} << n) - 1);
        return solver.solve(full, solver.depth, grad.empty() ? nullptr : grad.data());
    }
    // First-step softmax KL for large sets.
    std::vector<double> lp = solver.sp, lr = solver.sr;
    const double zp = log_sum_exp(lp), zr = log_sum_exp(lr);
    std::vector<double> mean(solver.d, 0.0);
    std::vector<double> prob(n);
    for (std::size_t i = 0; i < n; ++i) {
        prob[i] = std::exp(lp[i] - zp);
        for (std::size_t j = 0; j < solver.d && !grad.empty(); ++j) mean[j] += prob[i] * rows[i][j];
    }
    double value = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = (lp[i] - zp) - (lr[i] - zr);
        value += prob[i] * a;
        for (std::size_t j = 0; j < solver.d && !grad.empty(); ++j)
            grad[j] += prob[i] * (rows[i][j] - mean[j]) / p.temperature * a;
    }
    return value;
}

}  // namespace genfacet
