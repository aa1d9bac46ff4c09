#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "text2data/autodiff.hpp"
#include "text2data/condition_vector.hpp"
#include "text2data/errors.hpp"
#include "text2data/rng.hpp"
#include "text2data/tensor.hpp"

namespace text2data {

enum class Activation { silu, tanh };

inline std::string to_string(Activation a) { return a == Activation::silu ? "silu" : "tanh"; }

inline Activation activation_from_string(const std::string& s) {
    if (s == "silu") return Activation::silu;
    if (s == "tanh") return Activation::tanh;
    throw InvalidArgument("unknown activation '" + s + "'");
}

struct Architecture {
    std::size_t series_length = 64;
    std::vector<std::size_t> hidden{128, 128, 128};
    Activation activation = Activation::silu;
    std::size_t cond_dim = 12;
    std::size_t time_dim = 16;

    std::size_t input_dim() const noexcept { return series_length + time_dim + cond_dim; }
    bool operator==(const Architecture&) const = default;
};

/// Sinusoidal embedding of diffusion step t: [sin(t·f_k)..., cos(t·f_k)...],
/// f_k = 10000^(−k/half).
inline std::vector<double> time_embedding(std::size_t t, std::size_t dim) {
    std::vector<double> out(dim, 0.0);
    const std::size_t half = dim / 2;
    for (std::size_t k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
        out[k] = std::sin(static_cast<double>(t) * freq);
        out[half + k] = std::cos(static_cast<double>(t) * freq);
    }
    return out;
}

/// Noise predictor ε_θ(x_t, c, t): a perceptron over concat(x_t, time embedding, c).
/// Conditional and unconditional predictions share every parameter; the
/// unconditional one simply receives the NULL condition.
class ScoreNetwork {
public:
    ScoreNetwork() = default;
    ScoreNetwork(Architecture arch, ParamSet params) : arch_(std::move(arch)), params_(std::move(params)) {
        const auto layout = parameter_layout(arch_);
        bool ok = layout.size() == params_.count();
        for (std::size_t i = 0; ok && i < layout.size(); ++i) {
            ok = params_.entry(i).name == layout[i].first && params_.entry(i).value.shape() == layout[i].second;
        }
        if (!ok) throw InvalidArgument("score network: parameters do not match architecture");
    }

    /// Parameter names and shapes, in ParamSet order.
    static std::vector<std::pair<std::string, Shape>> parameter_layout(const Architecture& arch) {
        std::vector<std::pair<std::string, Shape>> out;
        std::size_t fan_in = arch.input_dim();
        for (std::size_t l = 0; l < arch.hidden.size(); ++l) {
            out.emplace_back("dense" + std::to_string(l) + ".weight", Shape{fan_in, arch.hidden[l]});
            out.emplace_back("dense" + std::to_string(l) + ".bias", Shape{arch.hidden[l]});
            fan_in = arch.hidden[l];
        }
        out.emplace_back("out.weight", Shape{fan_in, arch.series_length});
        out.emplace_back("out.bias", Shape{arch.series_length});
        return out;
    }

    /// Uniform(±1/√fan_in) hidden layers, zero output layer.
    static ScoreNetwork initialize(const Architecture& arch, std::uint64_t seed) {
        if (arch.series_length == 0 || arch.hidden.empty() || arch.time_dim == 0) {
            throw InvalidArgument("score network: invalid architecture");
        }
        Rng rng(seed);
        ScoreNetwork net;
        net.arch_ = arch;
        std::size_t fan_in = arch.input_dim();
        for (std::size_t l = 0; l < arch.hidden.size(); ++l) {
            const auto width = arch.hidden[l];
            if (width == 0) throw InvalidArgument("score network: zero-width hidden layer");
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            std::uniform_real_distribution<double> dist(-bound, bound);
            std::vector<double> w(fan_in * width), b(width);
            for (auto& v : w) v = dist(rng);
            for (auto& v : b) v = dist(rng);
            net.params_.add("dense" + std::to_string(l) + ".weight", Tensor::matrix(fan_in, width, std::move(w)));
            net.params_.add("dense" + std::to_string(l) + ".bias", Tensor::vector(std::move(b)));
            fan_in = width;
        }
        net.params_.add("out.weight", Tensor::zeros({fan_in, arch.series_length}));
        net.params_.add("out.bias", Tensor::zeros({arch.series_length}));
        return net;
    }

    const Architecture& arch() const noexcept { return arch_; }
    const ParamSet& params() const noexcept { return params_; }
    ScoreNetwork with_params(ParamSet params) const { return ScoreNetwork(arch_, std::move(params)); }

    bool operator==(const ScoreNetwork&) const = default;

    /// Records the batched forward pass. `x_t` is B×L, `cond` is B×d_c.
    Var forward(Tape& tape, std::span<const Var> params, const Tensor& x_t, std::span<const std::size_t> steps,
                const Tensor& cond) const {
        check_batch(x_t, steps, cond);
        const auto batch = x_t.dim(0);
        std::vector<double> temb;
        temb.reserve(batch * arch_.time_dim);
        for (auto t : steps) {
            auto e = time_embedding(t, arch_.time_dim);
            temb.insert(temb.end(), e.begin(), e.end());
        }
        Var h = concat_cols({tape.constant(x_t), tape.constant(Tensor::matrix(batch, arch_.time_dim, std::move(temb))),
                             tape.constant(cond)});
        const std::size_t layers = arch_.hidden.size();
        for (std::size_t l = 0; l < layers; ++l) {
            h = add_bias(matmul(h, params[2 * l]), params[2 * l + 1]);
            h = arch_.activation == Activation::silu ? silu(h) : text2data::tanh(h);
        }
        return add_bias(matmul(h, params[2 * layers]), params[2 * layers + 1]);
    }

    /// Batched prediction without gradient tracking.
    Tensor predict(const Tensor& x_t, std::span<const std::size_t> steps, const Tensor& cond) const {
        Tape tape(false);
        auto vars = detail::bind(tape, params_);
        return tape.value(forward(tape, vars, x_t, steps, cond));
    }

private:
    void check_batch(const Tensor& x_t, std::span<const std::size_t> steps, const Tensor& cond) const {
        if (x_t.rank() != 2 || x_t.dim(1) != arch_.series_length) {
            throw InvalidArgument("predict_noise: series shape " + shape_string(x_t.shape()) + ", expected length " +
                                  std::to_string(arch_.series_length));
        }
        if (cond.rank() != 2 || cond.dim(0) != x_t.dim(0) || cond.dim(1) != arch_.cond_dim) {
            throw InvalidArgument("predict_noise: condition shape " + shape_string(cond.shape()) + ", expected dimension " +
                                  std::to_string(arch_.cond_dim));
        }
        if (steps.size() != x_t.dim(0)) throw InvalidArgument("predict_noise: one step index per batch row required");
    }

    Architecture arch_;
    ParamSet params_;
};

/// Stacks condition vectors into a B×d_c matrix.
inline Tensor stack_conditions(std::span<const ConditionVector> conds, std::size_t dim) {
    if (conds.empty()) throw InvalidArgument("stack_conditions: empty batch");
    std::vector<double> data;
    data.reserve(conds.size() * dim);
    for (const auto& c : conds) {
        if (c.dim() != dim) {
            throw InvalidArgument("condition dimension " + std::to_string(c.dim()) + " does not match network (" +
                                  std::to_string(dim) + ")");
        }
        data.insert(data.end(), c.values().begin(), c.values().end());
    }
    return Tensor::matrix(conds.size(), dim, std::move(data));
}

/// Single-series ε_θ(x_t, c, t).
inline Tensor predict_noise(const ScoreNetwork& net, const Tensor& x_t, std::size_t t, const ConditionVector& c) {
    if (x_t.rank() != 1 || x_t.size() != net.arch().series_length) {
        throw InvalidArgument("predict_noise: expected a series of length " + std::to_string(net.arch().series_length));
    }
    const std::size_t steps[] = {t};
    const ConditionVector conds[] = {c};
    auto out = net.predict(Tensor::matrix(1, x_t.size(), x_t.values()), steps, stack_conditions(conds, net.arch().cond_dim));
    return Tensor::vector(out.values());
}

} // namespace text2data
