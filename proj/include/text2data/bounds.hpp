#pragma once

// Finite-hypothesis generalization bound for the two-stage objective.
//
//   ε_m = √(C σ̃²) · √(ℓ/m)  ∨  C σ̃² · ℓ/m,   ℓ = log|Θ| + log(2/δ),
//   C = 8√2, σ̃² = σ² + 1.
//
// With probability ≥ 1 − δ the empirical minimizer θ̂* satisfies
//   L2(θ̂*)  ≤ L2(θ*) + 2 ε_{N_p}
//   L1'(θ̂*) ≤ ξ + 2 ε_{N_p} + 2 ε_N.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "text2data/errors.hpp"
#include "text2data/parallel.hpp"
#include "text2data/rng.hpp"

namespace text2data {

inline const double bound_constant = 8.0 * std::numbers::sqrt2;

struct BoundsInput {
    double sigma2 = 0.0;      // sub-Gaussian variance proxy of ε_θ − ε
    double delta = 0.1;       // failure probability
    std::size_t n = 1;        // unlabeled count N
    std::size_t np = 1;       // labeled count N_p
    double theta_card = 1.0;  // effective |Θ|

    double sigma2_tilde() const noexcept { return sigma2 + 1.0; }
    double log_term() const { return std::log(theta_card) + std::log(2.0 / delta); }

    void validate() const {
        if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) throw InvalidArgument("bounds: sigma2 must be finite and >= 0");
        if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("bounds: delta must lie in (0, 1)");
        if (n < 1 || np < 1) throw InvalidArgument("bounds: n and np must be at least 1");
        if (!(theta_card >= 1.0) || !std::isfinite(theta_card)) throw InvalidArgument("bounds: theta_card must be >= 1");
    }
};

struct BoundsReport {
    double eps_n = 0.0;
    double eps_np = 0.0;
    double eps = 0.0;
    double xi = 0.0;
    double guarantee_l2_slack = 0.0;
    double guarantee_l1p_slack = 0.0;
    double l1p_ceiling = 0.0; // ξ + l1p slack
};

/// Both branches, for callers that want to see which one is active.
struct EpsilonBranches {
    double sqrt_branch = 0.0;
    double linear_branch = 0.0;
    double value() const noexcept { return std::max(sqrt_branch, linear_branch); }
};

inline EpsilonBranches epsilon_branches(std::size_t m, const BoundsInput& in) {
    in.validate();
    if (m < 1) throw InvalidArgument("epsilon_bound: m must be at least 1");
    const double cs = bound_constant * in.sigma2_tilde();
    const double ratio = in.log_term() / static_cast<double>(m);
    return {std::sqrt(cs) * std::sqrt(ratio), cs * ratio};
}

inline double epsilon_bound(std::size_t m, const BoundsInput& in) { return epsilon_branches(m, in).value(); }

inline BoundsReport theorem1_report(const BoundsInput& in, double xi) {
    if (!(xi >= 0.0) || !std::isfinite(xi)) throw InvalidArgument("theorem1_report: xi must be finite and >= 0");
    BoundsReport r;
    r.eps_n = epsilon_bound(in.n, in);
    r.eps_np = epsilon_bound(in.np, in);
    r.eps = r.eps_n + r.eps_np;
    r.xi = xi;
    r.guarantee_l2_slack = 2.0 * r.eps_np;
    r.guarantee_l1p_slack = 2.0 * r.eps_np + 2.0 * r.eps_n;
    r.l1p_ceiling = xi + r.guarantee_l1p_slack;
    return r;
}

/// One hypothesis of a Monte-Carlo family: draws X, whose square has mean
/// `mean_square`; X is sub-Gaussian with proxy `sigma2`.
struct Hypothesis {
    double sigma2 = 0.0;
    double mean_square = 0.0;
    std::function<double(Rng&)> draw;
};

/// k centred Gaussians with variances σ²·j/k, j = 1..k.
inline std::vector<Hypothesis> gaussian_family(std::size_t k, double sigma2) {
    if (k < 1) throw InvalidArgument("gaussian_family: k must be at least 1");
    if (!(sigma2 > 0.0)) throw InvalidArgument("gaussian_family: sigma2 must be positive");
    std::vector<Hypothesis> out;
    for (std::size_t j = 1; j <= k; ++j) {
        const double v = sigma2 * static_cast<double>(j) / static_cast<double>(k);
        const double sd = std::sqrt(v);
        out.push_back({v, v, [sd](Rng& rng) { return sd * standard_normal(rng); }});
    }
    return out;
}

inline Hypothesis constant_zero_hypothesis() {
    return {0.0, 0.0, [](Rng&) { return 0.0; }};
}

struct CoverageResult {
    double violation_rate = 0.0;
    std::size_t violations = 0;
    std::size_t trials = 0;
    double epsilon = 0.0;
    double max_deviation = 0.0; // largest sup-deviation seen across trials
};

/// Fraction of trials where sup_h |mean(X_h²) − E X_h²| over m draws exceeds
/// ε_m, with σ² the largest proxy in the family and |Θ| its size.
inline CoverageResult monte_carlo_coverage(const std::vector<Hypothesis>& family, std::size_t m, double delta,
                                           std::size_t trials, std::uint64_t seed, std::size_t workers = 0) {
    if (family.empty()) throw InvalidArgument("monte_carlo_coverage: empty hypothesis family");
    if (trials < 100) throw InvalidArgument("monte_carlo_coverage: need at least 100 trials");
    if (m < 1) throw InvalidArgument("monte_carlo_coverage: m must be at least 1");
    BoundsInput in;
    in.delta = delta;
    in.theta_card = static_cast<double>(family.size());
    for (const auto& h : family) in.sigma2 = std::max(in.sigma2, h.sigma2);
    CoverageResult out;
    out.trials = trials;
    out.epsilon = epsilon_bound(m, in);

    std::vector<double> sup_dev(trials, 0.0);
    parallel_for(trials, workers, [&](std::size_t trial) {
        double sup = 0.0;
        for (std::size_t h = 0; h < family.size(); ++h) {
            Rng rng = make_rng(seed, "coverage", trial * family.size() + h);
            double sum = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                const double x = family[h].draw(rng);
                sum += x * x;
            }
            sup = std::max(sup, std::abs(sum / static_cast<double>(m) - family[h].mean_square));
        }
        sup_dev[trial] = sup;
    });
    for (double d : sup_dev) {
        out.violations += d > out.epsilon ? 1 : 0;
        out.max_deviation = std::max(out.max_deviation, d);
    }
    out.violation_rate = static_cast<double>(out.violations) / static_cast<double>(trials);
    return out;
}

/// Heuristic plug-in σ²: population variance of pooled ε̂ − ε residuals.
/// Not a sub-Gaussian proxy in any rigorous sense.
inline double plugin_sigma2(std::span<const double> residuals) {
    if (residuals.empty()) throw InvalidArgument("plugin_sigma2: no residuals");
    double mu = 0.0;
    for (double r : residuals) mu += r;
    mu /= static_cast<double>(residuals.size());
    double v = 0.0;
    for (double r : residuals) v += (r - mu) * (r - mu);
    return v / static_cast<double>(residuals.size());
}

} // namespace text2data
