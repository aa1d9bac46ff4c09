#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "text2data/errors.hpp"

namespace text2data {

/// Condition fed to the noise predictor. The NULL token is the all-zero
/// vector with `is_null()` set.
class ConditionVector {
public:
    ConditionVector() = default;

    explicit ConditionVector(std::vector<double> values) : values_(std::move(values)) {}

    static ConditionVector null(std::size_t dim) {
        ConditionVector c(std::vector<double>(dim, 0.0));
        c.null_ = true;
        return c;
    }

    std::size_t dim() const noexcept { return values_.size(); }
    bool is_null() const noexcept { return null_; }
    const std::vector<double>& values() const noexcept { return values_; }

    bool operator==(const ConditionVector&) const = default;

private:
    std::vector<double> values_;
    bool null_ = false;
};

} // namespace text2data
