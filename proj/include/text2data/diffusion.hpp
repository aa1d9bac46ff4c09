#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "text2data/autodiff.hpp"
#include "text2data/condition_vector.hpp"
#include "text2data/errors.hpp"
#include "text2data/network.hpp"
#include "text2data/rng.hpp"
#include "text2data/schedule.hpp"
#include "text2data/tensor.hpp"

namespace text2data {

/// x^(t) = √ᾱ_t · x + √(1 − ᾱ_t) · ε
inline Tensor diffuse(const Tensor& x, std::size_t t, const Tensor& eps, const NoiseSchedule& schedule) {
    if (x.shape() != eps.shape()) {
        throw InvalidArgument("diffuse: noise shape " + shape_string(eps.shape()) + " differs from series shape " +
                              shape_string(x.shape()));
    }
    const double ab = schedule.alpha_bar(t);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x[i] + b * eps[i];
    return Tensor(x.shape(), std::move(out));
}

/// The (t, ε) pair drawn for each batch item. Shared between the conditional
/// and unconditional losses of one finetuning step.
struct NoiseDraw {
    std::vector<std::size_t> steps;
    Tensor eps; // B×L
};

/// Per item: t ~ Uniform{1..T}, then L standard normals.
inline NoiseDraw draw_noise(std::size_t batch, std::size_t length, const NoiseSchedule& schedule, Rng& rng) {
    if (batch == 0) throw InvalidArgument("draw_noise: empty batch");
    std::uniform_int_distribution<std::size_t> step_dist(1, schedule.steps());
    std::normal_distribution<double> normal(0.0, 1.0);
    NoiseDraw draw;
    draw.steps.reserve(batch);
    std::vector<double> eps;
    eps.reserve(batch * length);
    for (std::size_t b = 0; b < batch; ++b) {
        draw.steps.push_back(step_dist(rng));
        for (std::size_t i = 0; i < length; ++i) eps.push_back(normal(rng));
    }
    draw.eps = Tensor::matrix(batch, length, std::move(eps));
    return draw;
}

/// Row-wise diffusion of a B×L batch with per-row steps.
inline Tensor diffuse_batch(const Tensor& x, const NoiseDraw& draw, const NoiseSchedule& schedule) {
    if (x.rank() != 2 || x.shape() != draw.eps.shape() || draw.steps.size() != x.dim(0)) {
        throw InvalidArgument("diffuse_batch: batch " + shape_string(x.shape()) + " does not match noise draw " +
                              shape_string(draw.eps.shape()));
    }
    const auto rows = x.dim(0), cols = x.dim(1);
    std::vector<double> out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double ab = schedule.alpha_bar(draw.steps[r]);
        const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
        for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = a * x[r * cols + j] + b * draw.eps[r * cols + j];
    }
    return Tensor(x.shape(), std::move(out));
}

/// Stacks equal-length series into a B×L matrix.
inline Tensor stack_series(std::span<const std::vector<double>> series) {
    if (series.empty()) throw InvalidArgument("stack_series: empty batch");
    const auto length = series.front().size();
    std::vector<double> data;
    data.reserve(series.size() * length);
    for (const auto& s : series) {
        if (s.size() != length) throw InvalidArgument("stack_series: ragged batch");
        data.insert(data.end(), s.begin(), s.end());
    }
    return Tensor::matrix(series.size(), length, std::move(data));
}

/// Mean over items and positions of (pred − ε)².
inline Var epsilon_mse(Tape& tape, Var pred, const Tensor& eps) { return mean(squared_error(pred, tape.constant(eps))); }

/// Mean over items and positions of ‖ε_θ(x^(t), c, t) − ε‖², as a tape
/// computation of the network parameters. The batch and draw are frozen;
/// `net` must outlive the returned computation.
inline Computation epsilon_loss(const ScoreNetwork& net, const Tensor& x, const Tensor& cond, const NoiseDraw& draw,
                                const NoiseSchedule& schedule) {
    if (x.rank() != 2 || x.dim(0) == 0) throw InvalidArgument("epsilon_loss: empty batch");
    Tensor x_t = diffuse_batch(x, draw, schedule);
    return [&net, x_t = std::move(x_t), cond, eps = draw.eps, steps = draw.steps](Tape& tape, std::span<const Var> p) {
        return epsilon_mse(tape, net.forward(tape, p, x_t, steps, cond), eps);
    };
}

struct LossResult {
    double value = 0.0;
    ParamSet grad;
    NoiseDraw draw;
};

namespace detail {

inline void require_batch(const Tensor& x, std::size_t conds, const ScoreNetwork& net) {
    if (x.rank() != 2 || x.dim(0) == 0) throw InvalidArgument("loss: empty batch");
    if (x.dim(1) != net.arch().series_length) throw InvalidArgument("loss: series length does not match network");
    if (conds != x.dim(0)) throw InvalidArgument("loss: one condition per item required");
}

inline LossResult run_loss(const ScoreNetwork& net, const Tensor& x, const Tensor& cond, NoiseDraw draw,
                           const NoiseSchedule& schedule) {
    auto vg = value_and_grad(epsilon_loss(net, x, cond, draw, schedule), net.params());
    return LossResult{vg.value, std::move(vg.grad), std::move(draw)};
}

inline Tensor null_conditions(std::size_t batch, std::size_t dim) { return Tensor::zeros({batch, dim}); }

} // namespace detail

/// Conditional ε-loss with a caller-supplied (t, ε) draw.
inline LossResult loss_conditional(const ScoreNetwork& net, const Tensor& x, std::span<const ConditionVector> conds,
                                   const NoiseSchedule& schedule, NoiseDraw draw) {
    detail::require_batch(x, conds.size(), net);
    return detail::run_loss(net, x, stack_conditions(conds, net.arch().cond_dim), std::move(draw), schedule);
}

/// Conditional ε-loss; samples t and ε per item from `rng`.
inline LossResult loss_conditional(const ScoreNetwork& net, const Tensor& x, std::span<const ConditionVector> conds,
                                   const NoiseSchedule& schedule, Rng& rng) {
    detail::require_batch(x, conds.size(), net);
    auto draw = draw_noise(x.dim(0), x.dim(1), schedule, rng);
    return loss_conditional(net, x, conds, schedule, std::move(draw));
}

/// Unconditional ε-loss (every item gets the NULL token) with a shared draw.
inline LossResult loss_unconditional(const ScoreNetwork& net, const Tensor& x, const NoiseSchedule& schedule,
                                     NoiseDraw draw) {
    detail::require_batch(x, x.rank() == 2 ? x.dim(0) : 0, net);
    return detail::run_loss(net, x, detail::null_conditions(x.dim(0), net.arch().cond_dim), std::move(draw), schedule);
}

inline LossResult loss_unconditional(const ScoreNetwork& net, const Tensor& x, const NoiseSchedule& schedule, Rng& rng) {
    detail::require_batch(x, x.rank() == 2 ? x.dim(0) : 0, net);
    auto draw = draw_noise(x.dim(0), x.dim(1), schedule, rng);
    return loss_unconditional(net, x, schedule, std::move(draw));
}

/// Loss value only (no gradients), NULL condition. Used for held-out checks.
inline double unconditional_loss_value(const ScoreNetwork& net, const Tensor& x, const NoiseSchedule& schedule,
                                       const NoiseDraw& draw) {
    detail::require_batch(x, x.rank() == 2 ? x.dim(0) : 0, net);
    return evaluate(epsilon_loss(net, x, detail::null_conditions(x.dim(0), net.arch().cond_dim), draw, schedule),
                    net.params());
}

struct SamplerStats {
    std::size_t conditional_evals = 0;
    std::size_t unconditional_evals = 0;
};

/// Classifier-free guided ancestral sampling for a batch of conditions.
/// ε̃ = (1+w)·ε_θ(x,t,c) − w·ε_θ(x,t,∅); rows whose condition is NULL use
/// ε_θ(x,t,∅) directly, and w = 0 never evaluates the unconditional branch.
inline Tensor sample_batch(const ScoreNetwork& net, const NoiseSchedule& schedule, std::span<const ConditionVector> conds,
                           double w, Rng& rng, SamplerStats* stats = nullptr) {
    if (!(w >= 0.0)) throw InvalidArgument("sample: guidance weight must be nonnegative");
    const auto batch = conds.size();
    const auto length = net.arch().series_length;
    const Tensor cond = stack_conditions(conds, net.arch().cond_dim);
    const Tensor null_cond = detail::null_conditions(batch, net.arch().cond_dim);
    bool any_guided = false;
    for (const auto& c : conds) any_guided = any_guided || !c.is_null();
    const bool guided = w > 0.0 && any_guided;

    std::vector<double> x = standard_normal_vector(rng, batch * length);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t t = schedule.steps(); t >= 1; --t) {
        const std::vector<std::size_t> steps(batch, t);
        const Tensor x_t = Tensor::matrix(batch, length, x);
        const Tensor eps_c = net.predict(x_t, steps, cond);
        if (stats) stats->conditional_evals += batch;
        std::vector<double> eps(eps_c.values());
        if (guided) {
            const Tensor eps_u = net.predict(x_t, steps, null_cond);
            if (stats) stats->unconditional_evals += batch;
            for (std::size_t r = 0; r < batch; ++r) {
                if (conds[r].is_null()) continue;
                for (std::size_t j = 0; j < length; ++j) {
                    const auto i = r * length + j;
                    eps[i] = (1.0 + w) * eps_c[i] - w * eps_u[i];
                }
            }
        }
        const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha(t));
        const double coef = schedule.beta(t) / std::sqrt(1.0 - schedule.alpha_bar(t));
        const double sigma = std::sqrt(schedule.posterior_sigma2(t));
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = inv_sqrt_alpha * (x[i] - coef * eps[i]);
            if (t > 1) x[i] += sigma * normal(rng);
        }
        for (double v : x) {
            if (!std::isfinite(v)) throw NumericalError("numerical instability in sample at step " + std::to_string(t));
        }
    }
    return Tensor::matrix(batch, length, std::move(x));
}

/// One series from ε_θ guided by `c` with weight `w`.
inline Tensor sample(const ScoreNetwork& net, const NoiseSchedule& schedule, const ConditionVector& c, double w, Rng& rng,
                     SamplerStats* stats = nullptr) {
    const ConditionVector conds[] = {c};
    auto out = sample_batch(net, schedule, conds, w, rng, stats);
    return Tensor::vector(out.values());
}

} // namespace text2data
