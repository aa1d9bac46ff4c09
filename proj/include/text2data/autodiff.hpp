#pragma once

// Tape-based reverse-mode differentiation over a fixed, small primitive set:
// matmul, add, broadcast bias add, tanh, SiLU, scale, mean, squared error and
// column concatenation. Every tape is a private evaluation context.

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "text2data/errors.hpp"
#include "text2data/tensor.hpp"

namespace text2data {

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;
};

namespace detail {

enum class Op { leaf, matmul, add, add_bias, tanh, silu, scale, mean, squared_error, concat_cols };

inline const char* op_name(Op op) {
    switch (op) {
    case Op::leaf: return "leaf";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::add_bias: return "add_bias";
    case Op::tanh: return "tanh";
    case Op::silu: return "silu";
    case Op::scale: return "scale";
    case Op::mean: return "mean";
    case Op::squared_error: return "squared_error";
    case Op::concat_cols: return "concat_cols";
    }
    return "?";
}

inline void require_finite(Op op, std::span<const double> values) {
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericalError(std::string("numerical instability in ") + op_name(op));
    }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// out[m×n] = a[m×k] · b[k×n]
inline void gemm(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t m,
                 std::size_t k, std::size_t n) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* brow = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
}

inline std::vector<double> transpose(std::span<const double> a, std::size_t rows, std::size_t cols) {
    std::vector<double> t(a.size());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
    return t;
}

} // namespace detail

class Tape {
public:
    /// Gradients are only tracked when `track_gradients` is true; inference
    /// tapes skip all gradient bookkeeping.
    explicit Tape(bool track_gradients = true) : track_(track_gradients) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value) { return push(detail::Op::leaf, std::move(value), {}, 0.0, false); }
    Var parameter(Tensor value) { return push(detail::Op::leaf, std::move(value), {}, 0.0, track_); }

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Gradient of the last backward() root with respect to `v`. Zero when `v`
    /// does not depend on any parameter.
    std::vector<double> gradient(Var v) const {
        const auto& node = nodes_.at(v.id);
        if (node.grad.empty()) return std::vector<double>(node.value.size(), 0.0);
        return node.grad;
    }

    void backward(Var root);

    // Primitive recording, used by the free functions below.
    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var add_bias(Var a, Var bias);
    Var tanh(Var a);
    Var silu(Var a);
    Var scale(Var a, double factor);
    Var mean(Var a);
    Var squared_error(Var a, Var b);
    Var concat_cols(std::span<const Var> parts);

private:
    struct Node {
        detail::Op op;
        Tensor value;
        std::vector<std::size_t> inputs;
        double factor;
        bool requires_grad;
        std::vector<double> grad;
    };

    Var push(detail::Op op, Tensor value, std::vector<std::size_t> inputs, double factor, bool requires_grad) {
        nodes_.push_back(Node{op, std::move(value), std::move(inputs), factor, requires_grad, {}});
        return Var{this, nodes_.size() - 1};
    }

    Var push_result(detail::Op op, std::vector<double> data, Shape shape, std::vector<std::size_t> inputs,
                    double factor = 0.0) {
        detail::require_finite(op, data);
        bool rg = false;
        for (auto i : inputs) rg = rg || nodes_[i].requires_grad;
        return push(op, Tensor(std::move(shape), std::move(data)), std::move(inputs), factor, rg);
    }

    const Node& node(Var v) const {
        if (v.tape != this) throw InvalidArgument("autodiff: variable belongs to a different tape");
        return nodes_.at(v.id);
    }

    std::vector<double>& grad_buffer(std::size_t id) {
        auto& n = nodes_[id];
        if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
        return n.grad;
    }

    void backward_node(std::size_t id);

    bool track_;
    std::vector<Node> nodes_;
};

inline Var Tape::matmul(Var a, Var b) {
    const auto& ta = node(a).value;
    const auto& tb = node(b).value;
    if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0)) {
        throw InvalidArgument("matmul: incompatible shapes " + shape_string(ta.shape()) + " x " + shape_string(tb.shape()));
    }
    const auto m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
    std::vector<double> out(m * n);
    detail::gemm(ta.data(), tb.data(), out, m, k, n);
    return push_result(detail::Op::matmul, std::move(out), {m, n}, {a.id, b.id});
}

inline Var Tape::add(Var a, Var b) {
    const auto& ta = node(a).value;
    const auto& tb = node(b).value;
    if (ta.shape() != tb.shape()) {
        throw InvalidArgument("add: shape mismatch " + shape_string(ta.shape()) + " vs " + shape_string(tb.shape()));
    }
    std::vector<double> out(ta.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] + tb[i];
    return push_result(detail::Op::add, std::move(out), ta.shape(), {a.id, b.id});
}

inline Var Tape::add_bias(Var a, Var bias) {
    const auto& ta = node(a).value;
    const auto& tb = node(bias).value;
    if (ta.rank() != 2 || tb.rank() != 1 || tb.dim(0) != ta.dim(1)) {
        throw InvalidArgument("add_bias: incompatible shapes " + shape_string(ta.shape()) + " + " +
                              shape_string(tb.shape()));
    }
    const auto rows = ta.dim(0), cols = ta.dim(1);
    std::vector<double> out(ta.size());
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = ta[i * cols + j] + tb[j];
    return push_result(detail::Op::add_bias, std::move(out), ta.shape(), {a.id, bias.id});
}

inline Var Tape::tanh(Var a) {
    const auto& ta = node(a).value;
    std::vector<double> out(ta.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(ta[i]);
    return push_result(detail::Op::tanh, std::move(out), ta.shape(), {a.id});
}

inline Var Tape::silu(Var a) {
    const auto& ta = node(a).value;
    std::vector<double> out(ta.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] * detail::sigmoid(ta[i]);
    return push_result(detail::Op::silu, std::move(out), ta.shape(), {a.id});
}

inline Var Tape::scale(Var a, double factor) {
    const auto& ta = node(a).value;
    std::vector<double> out(ta.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * ta[i];
    return push_result(detail::Op::scale, std::move(out), ta.shape(), {a.id}, factor);
}

inline Var Tape::mean(Var a) {
    const auto& ta = node(a).value;
    double s = 0.0;
    for (double v : ta.data()) s += v;
    return push_result(detail::Op::mean, {s / static_cast<double>(ta.size())}, {1}, {a.id});
}

inline Var Tape::squared_error(Var a, Var b) {
    const auto& ta = node(a).value;
    const auto& tb = node(b).value;
    if (ta.shape() != tb.shape()) {
        throw InvalidArgument("squared_error: shape mismatch " + shape_string(ta.shape()) + " vs " +
                              shape_string(tb.shape()));
    }
    std::vector<double> out(ta.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double d = ta[i] - tb[i];
        out[i] = d * d;
    }
    return push_result(detail::Op::squared_error, std::move(out), ta.shape(), {a.id, b.id});
}

inline Var Tape::concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
    const auto rows = node(parts[0]).value.dim(0);
    std::size_t cols = 0;
    std::vector<std::size_t> ids;
    for (auto p : parts) {
        const auto& t = node(p).value;
        if (t.rank() != 2 || t.dim(0) != rows) {
            throw InvalidArgument("concat_cols: part shape " + shape_string(t.shape()) + " incompatible with " +
                                  std::to_string(rows) + " rows");
        }
        cols += t.dim(1);
        ids.push_back(p.id);
    }
    std::vector<double> out(rows * cols);
    std::size_t offset = 0;
    for (auto p : parts) {
        const auto& t = node(p).value;
        const auto pc = t.dim(1);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < pc; ++j) out[i * cols + offset + j] = t[i * pc + j];
        offset += pc;
    }
    return push_result(detail::Op::concat_cols, std::move(out), {rows, cols}, std::move(ids));
}

inline void Tape::backward(Var root) {
    const auto& r = node(root);
    if (r.value.size() != 1) throw InvalidArgument("backward: root must be a scalar, got " + shape_string(r.value.shape()));
    for (auto& n : nodes_) n.grad.clear();
    if (!r.requires_grad) return;
    grad_buffer(root.id)[0] = 1.0;
    for (std::size_t id = root.id + 1; id-- > 0;) {
        if (!nodes_[id].grad.empty() && nodes_[id].op != detail::Op::leaf) backward_node(id);
    }
}

inline void Tape::backward_node(std::size_t id) {
    using detail::Op;
    // grad_buffer() only touches input nodes' grad vectors, never nodes_ itself.
    const Node& n = nodes_[id];
    const std::vector<double>& g = n.grad;
    detail::require_finite(n.op, g);
    auto wants = [&](std::size_t input) { return nodes_[n.inputs[input]].requires_grad; };

    switch (n.op) {
    case Op::leaf: break;
    case Op::matmul: {
        const auto& ta = nodes_[n.inputs[0]].value;
        const auto& tb = nodes_[n.inputs[1]].value;
        const auto m = ta.dim(0), k = ta.dim(1), cols = tb.dim(1);
        if (wants(0)) {
            // dA = dC · Bᵀ
            auto bt = detail::transpose(tb.data(), k, cols);
            auto& ga = grad_buffer(n.inputs[0]);
            for (std::size_t i = 0; i < m; ++i) {
                double* garow = ga.data() + i * k;
                for (std::size_t j = 0; j < cols; ++j) {
                    const double gij = g[i * cols + j];
                    const double* btrow = bt.data() + j * k;
                    for (std::size_t p = 0; p < k; ++p) garow[p] += gij * btrow[p];
                }
            }
        }
        if (wants(1)) {
            // dB = Aᵀ · dC
            auto& gb = grad_buffer(n.inputs[1]);
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = g.data() + i * cols;
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = ta[i * k + p];
                    double* gbrow = gb.data() + p * cols;
                    for (std::size_t j = 0; j < cols; ++j) gbrow[j] += aip * grow[j];
                }
            }
        }
        break;
    }
    case Op::add:
        for (std::size_t in = 0; in < 2; ++in) {
            if (!wants(in)) continue;
            auto& gi = grad_buffer(n.inputs[in]);
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
        break;
    case Op::add_bias: {
        const auto cols = n.value.dim(1);
        const auto rows = n.value.dim(0);
        if (wants(0)) {
            auto& ga = grad_buffer(n.inputs[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (wants(1)) {
            auto& gb = grad_buffer(n.inputs[1]);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) gb[j] += g[i * cols + j];
        }
        break;
    }
    case Op::tanh: {
        if (!wants(0)) break;
        auto& ga = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double y = n.value[i];
            ga[i] += g[i] * (1.0 - y * y);
        }
        break;
    }
    case Op::silu: {
        if (!wants(0)) break;
        const auto& ta = nodes_[n.inputs[0]].value;
        auto& ga = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double s = detail::sigmoid(ta[i]);
            ga[i] += g[i] * (s + ta[i] * s * (1.0 - s));
        }
        break;
    }
    case Op::scale: {
        if (!wants(0)) break;
        auto& ga = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.factor * g[i];
        break;
    }
    case Op::mean: {
        if (!wants(0)) break;
        auto& ga = grad_buffer(n.inputs[0]);
        const double share = g[0] / static_cast<double>(ga.size());
        for (auto& v : ga) v += share;
        break;
    }
    case Op::squared_error: {
        const auto& ta = nodes_[n.inputs[0]].value;
        const auto& tb = nodes_[n.inputs[1]].value;
        for (std::size_t in = 0; in < 2; ++in) {
            if (!wants(in)) continue;
            const double sign = in == 0 ? 2.0 : -2.0;
            auto& gi = grad_buffer(n.inputs[in]);
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += sign * (ta[i] - tb[i]) * g[i];
        }
        break;
    }
    case Op::concat_cols: {
        const auto rows = n.value.dim(0), cols = n.value.dim(1);
        std::size_t offset = 0;
        for (std::size_t in = 0; in < n.inputs.size(); ++in) {
            const auto pc = nodes_[n.inputs[in]].value.dim(1);
            if (wants(in)) {
                auto& gi = grad_buffer(n.inputs[in]);
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < pc; ++j) gi[i * pc + j] += g[i * cols + offset + j];
            }
            offset += pc;
        }
        break;
    }
    }
}

inline Var matmul(Var a, Var b) { return a.tape->matmul(a, b); }
inline Var add(Var a, Var b) { return a.tape->add(a, b); }
inline Var add_bias(Var a, Var bias) { return a.tape->add_bias(a, bias); }
inline Var tanh(Var a) { return a.tape->tanh(a); }
inline Var silu(Var a) { return a.tape->silu(a); }
inline Var scale(Var a, double factor) { return a.tape->scale(a, factor); }
inline Var mean(Var a) { return a.tape->mean(a); }
inline Var squared_error(Var a, Var b) { return a.tape->squared_error(a, b); }
inline Var concat_cols(std::initializer_list<Var> parts) {
    std::vector<Var> v(parts);
    return v.front().tape->concat_cols(v);
}

/// A differentiable map from a ParamSet (bound as tape parameters, in
/// ParamSet order) to a scalar node.
using Computation = std::function<Var(Tape&, std::span<const Var>)>;

struct ValueAndGrad {
    double value = 0.0;
    ParamSet grad;
};

namespace detail {

inline std::vector<Var> bind(Tape& tape, const ParamSet& params) {
    std::vector<Var> vars;
    vars.reserve(params.count());
    for (const auto& e : params) vars.push_back(tape.parameter(e.value));
    return vars;
}

inline double scalar_of(const Tape& tape, Var out) {
    const auto& t = tape.value(out);
    if (t.size() != 1) throw InvalidArgument("computation must return a scalar, got " + shape_string(t.shape()));
    return t[0];
}

} // namespace detail

/// Loss value only; no gradient bookkeeping.
inline double evaluate(const Computation& f, const ParamSet& params) {
    Tape tape(false);
    auto vars = detail::bind(tape, params);
    return detail::scalar_of(tape, f(tape, vars));
}

inline ValueAndGrad value_and_grad(const Computation& f, const ParamSet& params) {
    Tape tape(true);
    auto vars = detail::bind(tape, params);
    const Var out = f(tape, vars);
    ValueAndGrad result;
    result.value = detail::scalar_of(tape, out);
    tape.backward(out);
    for (std::size_t i = 0; i < params.count(); ++i) {
        result.grad.add(params.entry(i).name, Tensor(params.entry(i).value.shape(), tape.gradient(vars[i])));
    }
    return result;
}

/// Central differences on the selected flat coordinates.
inline std::vector<double> finite_difference(const Computation& f, const ParamSet& params, double h,
                                             std::span<const std::size_t> coords) {
    if (!(h > 0.0)) throw InvalidArgument("finite_difference: step h must be positive");
    auto flat = params.flatten();
    std::vector<double> out;
    out.reserve(coords.size());
    for (auto c : coords) {
        if (c >= flat.size()) throw InvalidArgument("finite_difference: coordinate out of range");
        const double orig = flat[c];
        flat[c] = orig + h;
        const double up = evaluate(f, params.unflatten(flat));
        flat[c] = orig - h;
        const double down = evaluate(f, params.unflatten(flat));
        flat[c] = orig;
        out.push_back((up - down) / (2.0 * h));
    }
    return out;
}

/// Central-difference gradient over every scalar coordinate.
inline ParamSet finite_difference(const Computation& f, const ParamSet& params, double h) {
    std::vector<std::size_t> all(params.scalar_count());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return params.unflatten(finite_difference(f, params, h, all));
}

/// Central difference of f along `direction`: (f(θ+hv) − f(θ−hv)) / 2h.
inline double directional_finite_difference(const Computation& f, const ParamSet& params,
                                            std::span<const double> direction, double h) {
    if (!(h > 0.0)) throw InvalidArgument("finite_difference: step h must be positive");
    auto flat = params.flatten();
    if (direction.size() != flat.size()) throw InvalidArgument("finite_difference: direction length mismatch");
    std::vector<double> up(flat), down(flat);
    for (std::size_t i = 0; i < flat.size(); ++i) {
        up[i] += h * direction[i];
        down[i] -= h * direction[i];
    }
    return (evaluate(f, params.unflatten(up)) - evaluate(f, params.unflatten(down))) / (2.0 * h);
}

} // namespace text2data
