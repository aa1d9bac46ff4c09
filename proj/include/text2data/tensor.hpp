#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "text2data/errors.hpp"

namespace text2data {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

/// Dense row-major float64 tensor. Immutable once built; every entry is finite.
class Tensor {
public:
    Tensor() = default;

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        for (auto d : shape_) {
            if (d == 0) throw InvalidArgument("tensor: zero-sized dimension in shape " + shape_string(shape_));
        }
        if (shape_size(shape_) != data_.size()) {
            throw InvalidArgument("tensor: shape " + shape_string(shape_) + " does not match " +
                                  std::to_string(data_.size()) + " values");
        }
        for (double v : data_) {
            if (!std::isfinite(v)) throw NumericalError("tensor: non-finite entry");
        }
    }

    static Tensor zeros(Shape shape) {
        auto n = shape_size(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0));
    }

    static Tensor filled(Shape shape, double value) {
        auto n = shape_size(shape);
        return Tensor(std::move(shape), std::vector<double>(n, value));
    }

    static Tensor scalar(double value) { return Tensor({1}, {value}); }

    static Tensor vector(std::vector<double> values) {
        auto n = values.size();
        return Tensor({n}, std::move(values));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
        return Tensor({rows, cols}, std::move(values));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }
    double operator[](std::size_t i) const { return data_[i]; }
    double at(std::size_t row, std::size_t col) const { return data_[row * shape_.at(1) + col]; }

    /// Row `r` of a rank-2 tensor.
    std::span<const double> row(std::size_t r) const {
        const auto cols = shape_.at(1);
        return std::span<const double>(data_).subspan(r * cols, cols);
    }

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Named, ordered tensors. Holds model parameters and their gradients.
class ParamSet {
public:
    struct Entry {
        std::string name;
        Tensor value;
        bool operator==(const Entry&) const = default;
    };

    void add(std::string name, Tensor value) {
        if (contains(name)) throw InvalidArgument("paramset: duplicate name '" + name + "'");
        entries_.push_back({std::move(name), std::move(value)});
    }

    bool contains(std::string_view name) const {
        return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
    }

    std::size_t index_of(std::string_view name) const {
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].name == name) return i;
        }
        throw InvalidArgument("paramset: no entry named '" + std::string(name) + "'");
    }

    const Tensor& operator[](std::string_view name) const { return entries_[index_of(name)].value; }
    const Entry& entry(std::size_t i) const { return entries_.at(i); }
    std::size_t count() const noexcept { return entries_.size(); }
    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }

    /// Total number of scalars across all tensors.
    std::size_t scalar_count() const noexcept {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.value.size();
        return n;
    }

    std::vector<double> flatten() const {
        std::vector<double> flat;
        flat.reserve(scalar_count());
        for (const auto& e : entries_) flat.insert(flat.end(), e.value.data().begin(), e.value.data().end());
        return flat;
    }

    /// Same names and shapes as *this, values taken from `flat`.
    ParamSet unflatten(std::span<const double> flat) const {
        if (flat.size() != scalar_count()) {
            throw InvalidArgument("paramset: unflatten expects " + std::to_string(scalar_count()) + " values, got " +
                                  std::to_string(flat.size()));
        }
        ParamSet out;
        std::size_t offset = 0;
        for (const auto& e : entries_) {
            auto n = e.value.size();
            out.add(e.name, Tensor(e.value.shape(), std::vector<double>(flat.begin() + offset, flat.begin() + offset + n)));
            offset += n;
        }
        return out;
    }

    ParamSet zeros_like() const {
        ParamSet out;
        for (const auto& e : entries_) out.add(e.name, Tensor::zeros(e.value.shape()));
        return out;
    }

    bool same_layout(const ParamSet& other) const {
        if (other.count() != count()) return false;
        for (std::size_t i = 0; i < count(); ++i) {
            if (entries_[i].name != other.entries_[i].name || entries_[i].value.shape() != other.entries_[i].value.shape())
                return false;
        }
        return true;
    }

    bool operator==(const ParamSet&) const = default;

private:
    std::vector<Entry> entries_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw InvalidArgument("dot: length mismatch " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm_squared(std::span<const double> a) { return dot(a, a); }

} // namespace text2data
