#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "text2data/errors.hpp"

namespace text2data {

/// Linear-β DDPM noise schedule. Step indices are 1-based (t = 1..T).
class NoiseSchedule {
public:
    static constexpr std::size_t default_steps = 200;
    static constexpr double default_beta_start = 1e-4;
    static constexpr double default_beta_end = 0.08;

    NoiseSchedule() : NoiseSchedule(linear(default_steps, default_beta_start, default_beta_end)) {}

    /// β_t interpolated linearly from beta_start (t=1) to beta_end (t=T).
    static NoiseSchedule linear(std::size_t steps, double beta_start, double beta_end) {
        if (steps < 1) throw InvalidArgument("schedule: T must be at least 1");
        if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
            throw InvalidArgument("schedule: need 0 < beta_start <= beta_end < 1");
        }
        NoiseSchedule s(steps);
        s.beta_start_ = beta_start;
        s.beta_end_ = beta_end;
        for (std::size_t i = 0; i < steps; ++i) {
            const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
            s.beta_[i] = beta_start + (beta_end - beta_start) * frac;
            s.alpha_[i] = 1.0 - s.beta_[i];
            s.alpha_bar_[i] = (i == 0 ? 1.0 : s.alpha_bar_[i - 1]) * s.alpha_[i];
            // Fixed reverse variance; σ_1² = β_1 and the final reverse step adds no noise.
            s.sigma2_[i] = i == 0 ? s.beta_[0] : (1.0 - s.alpha_bar_[i - 1]) * s.beta_[i] / (1.0 - s.alpha_bar_[i]);
        }
        return s;
    }

    std::size_t steps() const noexcept { return beta_.size(); }
    double beta_start() const noexcept { return beta_start_; }
    double beta_end() const noexcept { return beta_end_; }

    double beta(std::size_t t) const { return beta_[index(t)]; }
    double alpha(std::size_t t) const { return alpha_[index(t)]; }
    double alpha_bar(std::size_t t) const { return alpha_bar_[index(t)]; }
    double posterior_sigma2(std::size_t t) const { return sigma2_[index(t)]; }

    bool operator==(const NoiseSchedule&) const = default;

private:
    explicit NoiseSchedule(std::size_t steps)
        : beta_(steps), alpha_(steps), alpha_bar_(steps), sigma2_(steps) {}

    std::size_t index(std::size_t t) const {
        if (t < 1 || t > beta_.size()) {
            throw InvalidArgument("schedule: step " + std::to_string(t) + " outside 1.." + std::to_string(beta_.size()));
        }
        return t - 1;
    }

    double beta_start_ = 0.0;
    double beta_end_ = 0.0;
    std::vector<double> beta_;
    std::vector<double> alpha_;
    std::vector<double> alpha_bar_;
    std::vector<double> sigma2_;
};

inline NoiseSchedule make_linear_schedule(std::size_t steps, double beta_start, double beta_end) {
    return NoiseSchedule::linear(steps, beta_start, beta_end);
}

} // namespace text2data
