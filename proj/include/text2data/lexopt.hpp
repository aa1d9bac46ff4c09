#pragma once

// Constrained finetuning by dynamic-barrier lexicographic gradient descent:
//
//   minimize L2(θ)  subject to  L1'(θ) ≤ γ·ξ̂
//
//   φ = min(α(L1' − γ·ξ̂), β‖∇L1'‖²)
//   λ = max((φ − ∇L2·∇L1') / ‖∇L1'‖², 0)
//   θ ← θ − ω(∇L2 + λ∇L1')
//
// Here L2 is the conditional ε-loss on labeled data and L1' the unconditional
// one on the same labeled series (shared t, ε). ξ̂ is the relaxed anchor
// ρ·(pretrained unconditional loss).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "text2data/condition_vector.hpp"
#include "text2data/diffusion.hpp"
#include "text2data/errors.hpp"
#include "text2data/network.hpp"
#include "text2data/rng.hpp"
#include "text2data/schedule.hpp"
#include "text2data/tensor.hpp"

namespace text2data {

struct LexoptConfig {
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 1.0;
    double omega = 0.05;    // step size
    double rho = 1.05;      // relaxation of the raw anchor
    double p_uncond = 0.1;  // conditional dropout on the L2 branch
    double eps_div = 1e-12; // ‖∇L1'‖² below this gives λ = 0
    double xi_hat = 0.0;    // raw anchor: pretrained unconditional loss

    /// ρ·ξ̂
    double relaxed_anchor() const noexcept { return rho * xi_hat; }
    /// γ·ρ·ξ̂, the level L1' is held to.
    double constraint_level() const noexcept { return gamma * relaxed_anchor(); }

    void validate() const {
        if (!(alpha > 0.0 && beta > 0.0 && gamma > 0.0 && omega > 0.0)) {
            throw InvalidArgument("lexopt: alpha, beta, gamma and omega must be positive");
        }
        if (!(p_uncond >= 0.0 && p_uncond <= 1.0)) throw InvalidArgument("lexopt: p_uncond must be in [0, 1]");
        if (!(rho >= 1.0)) throw InvalidArgument("lexopt: rho must be at least 1");
        if (!(xi_hat >= 0.0)) throw InvalidArgument("lexopt: xi_hat must be nonnegative");
        if (!(eps_div >= 0.0)) throw InvalidArgument("lexopt: eps_div must be nonnegative");
    }
};

struct StepTrace {
    std::size_t step = 0;
    double l2 = 0.0;
    double l1p = 0.0;
    double phi = 0.0;
    double lambda = 0.0;
    double grad_norm_l2 = 0.0;
    double grad_norm_l1p = 0.0;
    bool constraint_ok = false;
    /// ∇L1'·(∇L2 + λ∇L1') ≥ φ, or φ < 0, or the degenerate-gradient case.
    bool dual_ok = false;

    bool operator==(const StepTrace&) const = default;
};

inline double barrier_phi(double l1p, double grad_l1p_normsq, const LexoptConfig& cfg) {
    return std::min(cfg.alpha * (l1p - cfg.constraint_level()), cfg.beta * grad_l1p_normsq);
}

inline double lambda_weight(double phi, std::span<const double> grad_l2, std::span<const double> grad_l1p,
                            double eps_div) {
    if (grad_l2.size() != grad_l1p.size()) {
        throw InvalidArgument("lambda_weight: gradient lengths differ (" + std::to_string(grad_l2.size()) + " vs " +
                              std::to_string(grad_l1p.size()) + ")");
    }
    const double nsq = norm_squared(grad_l1p);
    if (nsq < eps_div || nsq == 0.0) return 0.0;
    return std::max((phi - dot(grad_l2, grad_l1p)) / nsq, 0.0);
}

/// θ − ω(∇L2 + λ∇L1'). Pure.
inline ParamSet lex_step(const ParamSet& params, const ParamSet& grad_l2, const ParamSet& grad_l1p, double lambda,
                         double omega) {
    if (!params.same_layout(grad_l2) || !params.same_layout(grad_l1p)) {
        throw InvalidArgument("lex_step: gradient layout does not match parameters");
    }
    if (!(omega >= 0.0)) throw InvalidArgument("lex_step: omega must be nonnegative");
    auto theta = params.flatten();
    const auto g2 = grad_l2.flatten();
    if (lambda == 0.0) {
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= omega * g2[i];
    } else {
        const auto g1 = grad_l1p.flatten();
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= omega * (g2[i] + lambda * g1[i]);
    }
    return params.unflatten(theta);
}

/// Losses and gradients of both objectives at θ.
struct LexObjectiveValue {
    double l2 = 0.0;
    ParamSet grad_l2;
    double l1p = 0.0;
    ParamSet grad_l1p;
};

using LexObjective = std::function<LexObjectiveValue(const ParamSet&, std::size_t step)>;

/// Objective value and gradient for unconstrained descent.
struct PlainObjectiveValue {
    double value = 0.0;
    ParamSet grad;
};

using PlainObjective = std::function<PlainObjectiveValue(const ParamSet&, std::size_t step)>;

struct LexRun {
    ParamSet params;
    std::vector<StepTrace> trace;
    /// Set when a non-finite value stopped the run; params hold the last good iterate.
    std::optional<std::string> failure;
};

struct PlainRun {
    ParamSet params;
    std::vector<double> losses;
    std::optional<std::string> failure;
};

/// One traced lexicographic update.
inline StepTrace lexicographic_trace(std::size_t step, const LexObjectiveValue& v, const LexoptConfig& cfg) {
    const auto g2 = v.grad_l2.flatten();
    const auto g1 = v.grad_l1p.flatten();
    StepTrace tr;
    tr.step = step;
    tr.l2 = v.l2;
    tr.l1p = v.l1p;
    const double g1sq = norm_squared(g1);
    tr.grad_norm_l2 = std::sqrt(norm_squared(g2));
    tr.grad_norm_l1p = std::sqrt(g1sq);
    tr.phi = barrier_phi(v.l1p, g1sq, cfg);
    tr.lambda = lambda_weight(tr.phi, g2, g1, cfg.eps_div);
    tr.constraint_ok = v.l1p <= cfg.constraint_level();
    const double progress = dot(g2, g1) + tr.lambda * g1sq;
    const double slack = 1e-9 * std::max(1.0, std::abs(tr.phi));
    tr.dual_ok = tr.phi < 0.0 || g1sq < cfg.eps_div || progress >= tr.phi - slack;
    return tr;
}

inline LexRun lexicographic_descent(ParamSet init, const LexObjective& objective, const LexoptConfig& cfg,
                                    std::size_t steps) {
    cfg.validate();
    LexRun run{std::move(init), {}, std::nullopt};
    for (std::size_t s = 0; s < steps; ++s) {
        try {
            auto v = objective(run.params, s);
            if (!std::isfinite(v.l2) || !std::isfinite(v.l1p)) throw NumericalError("non-finite loss");
            auto tr = lexicographic_trace(s, v, cfg);
            run.params = lex_step(run.params, v.grad_l2, v.grad_l1p, tr.lambda, cfg.omega);
            run.trace.push_back(tr);
        } catch (const NumericalError& e) {
            run.failure = "step " + std::to_string(s) + ": " + e.what();
            break;
        }
    }
    return run;
}

inline PlainRun plain_descent(ParamSet init, const PlainObjective& objective, double omega, std::size_t steps) {
    if (!(omega > 0.0)) throw InvalidArgument("plain_descent: omega must be positive");
    PlainRun run{std::move(init), {}, std::nullopt};
    for (std::size_t s = 0; s < steps; ++s) {
        try {
            auto v = objective(run.params, s);
            if (!std::isfinite(v.value)) throw NumericalError("non-finite loss");
            run.params = lex_step(run.params, v.grad, v.grad, 0.0, omega);
            run.losses.push_back(v.value);
        } catch (const NumericalError& e) {
            run.failure = "step " + std::to_string(s) + ": " + e.what();
            break;
        }
    }
    return run;
}

/// Monte-Carlo mean of a stochastic loss over `n_batches` draws.
inline double compute_xi_hat(const std::function<double(Rng&)>& sample_loss, Rng& rng, std::size_t n_batches) {
    if (n_batches < 1) throw InvalidArgument("compute_xi_hat: n_batches must be at least 1");
    double sum = 0.0;
    for (std::size_t i = 0; i < n_batches; ++i) sum += sample_loss(rng);
    return sum / static_cast<double>(n_batches);
}

/// Raw anchor ξ̂: unconditional loss of the pretrained net over all of D,
/// averaged across fresh (t, ε) draws.
inline double compute_xi_hat(const ScoreNetwork& net, const Tensor& unlabeled, const NoiseSchedule& schedule, Rng& rng,
                             std::size_t n_batches) {
    return compute_xi_hat(
        [&](Rng& r) {
            auto draw = draw_noise(unlabeled.dim(0), unlabeled.dim(1), schedule, r);
            return unconditional_loss_value(net, unlabeled, schedule, draw);
        },
        rng, n_batches);
}

/// Labeled training pairs, already encoded.
struct LabeledSet {
    std::vector<std::vector<double>> series;
    std::vector<ConditionVector> conditions;

    std::size_t size() const noexcept { return series.size(); }
};

/// Epoch-wise shuffled minibatches over a labeled set. Counts every item it hands out.
class BatchLoader {
public:
    BatchLoader(const LabeledSet& data, std::size_t batch_size) : data_(data), batch_size_(batch_size) {
        if (data.size() == 0) throw InvalidArgument("batch loader: empty labeled set");
        if (data.series.size() != data.conditions.size()) throw InvalidArgument("batch loader: series/condition count mismatch");
        if (batch_size == 0) throw InvalidArgument("batch loader: batch size must be positive");
    }

    std::size_t batches_per_epoch() const noexcept { return (data_.size() + batch_size_ - 1) / batch_size_; }
    std::size_t touches() const noexcept { return touches_; }

    /// Series matrix and conditions for the next batch; reshuffles at epoch start.
    std::pair<Tensor, std::vector<ConditionVector>> next(Rng& rng) {
        if (cursor_ == 0) {
            order_.resize(data_.size());
            std::iota(order_.begin(), order_.end(), std::size_t{0});
            std::shuffle(order_.begin(), order_.end(), rng);
        }
        const auto end = std::min(cursor_ + batch_size_, data_.size());
        std::vector<std::vector<double>> xs;
        std::vector<ConditionVector> cs;
        for (auto i = cursor_; i < end; ++i) {
            xs.push_back(data_.series[order_[i]]);
            cs.push_back(data_.conditions[order_[i]]);
        }
        touches_ += end - cursor_;
        cursor_ = end == data_.size() ? 0 : end;
        return {stack_series(xs), std::move(cs)};
    }

private:
    const LabeledSet& data_;
    std::size_t batch_size_;
    std::size_t cursor_ = 0;
    std::size_t touches_ = 0;
    std::vector<std::size_t> order_;
};

/// Replaces each condition by NULL with probability p.
inline void apply_condition_dropout(std::vector<ConditionVector>& conds, double p, Rng& rng) {
    std::bernoulli_distribution drop(p);
    for (auto& c : conds) {
        if (drop(rng)) c = ConditionVector::null(c.dim());
    }
}

struct FinetuneResult {
    ScoreNetwork net;
    std::vector<StepTrace> trace;
    std::vector<double> losses; // L2 per step for plain finetuning
    std::optional<std::string> failure;
    std::size_t touches = 0;
};

struct FinetuneOptions {
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
};

/// Constrained finetuning on labeled data. Per step: batch, (t, ε), dropout
/// on the conditional branch, both losses from the shared draw, φ, λ, update.
inline FinetuneResult finetune(const ScoreNetwork& net, const LabeledSet& labeled, const NoiseSchedule& schedule,
                               const LexoptConfig& cfg, Rng& rng, FinetuneOptions opts) {
    cfg.validate();
    BatchLoader loader(labeled, opts.batch_size);
    const auto steps = opts.epochs * loader.batches_per_epoch();
    const LexObjective objective = [&](const ParamSet& params, std::size_t) {
        const ScoreNetwork current = net.with_params(params);
        auto [x, conds] = loader.next(rng);
        auto draw = draw_noise(x.dim(0), x.dim(1), schedule, rng);
        apply_condition_dropout(conds, cfg.p_uncond, rng);
        auto cond = loss_conditional(current, x, conds, schedule, draw);
        auto uncond = loss_unconditional(current, x, schedule, std::move(draw));
        return LexObjectiveValue{cond.value, std::move(cond.grad), uncond.value, std::move(uncond.grad)};
    };
    auto run = lexicographic_descent(net.params(), objective, cfg, steps);
    return FinetuneResult{net.with_params(std::move(run.params)), std::move(run.trace), {}, std::move(run.failure),
                          loader.touches()};
}

/// Same loop with λ fixed at 0 and no unconditional-loss bookkeeping.
inline FinetuneResult plain_finetune(const ScoreNetwork& net, const LabeledSet& labeled, const NoiseSchedule& schedule,
                                     double omega, double p_uncond, Rng& rng, FinetuneOptions opts) {
    BatchLoader loader(labeled, opts.batch_size);
    const auto steps = opts.epochs * loader.batches_per_epoch();
    const PlainObjective objective = [&](const ParamSet& params, std::size_t) {
        const ScoreNetwork current = net.with_params(params);
        auto [x, conds] = loader.next(rng);
        auto draw = draw_noise(x.dim(0), x.dim(1), schedule, rng);
        apply_condition_dropout(conds, p_uncond, rng);
        auto cond = loss_conditional(current, x, conds, schedule, std::move(draw));
        return PlainObjectiveValue{cond.value, std::move(cond.grad)};
    };
    auto run = plain_descent(net.params(), objective, omega, steps);
    return FinetuneResult{net.with_params(std::move(run.params)), {}, std::move(run.losses), std::move(run.failure),
                          loader.touches()};
}

} // namespace text2data
