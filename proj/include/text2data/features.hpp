#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string_view>
#include <vector>

#include "text2data/errors.hpp"

namespace text2data {

/// The six controllable time-series properties, in encoding order.
enum class Feature : std::size_t { frequency = 0, skewness, mean, variance, linearity, n_peaks };

inline constexpr std::size_t feature_count = 6;

inline constexpr std::array<Feature, feature_count> all_features{Feature::frequency, Feature::skewness, Feature::mean,
                                                                 Feature::variance,  Feature::linearity, Feature::n_peaks};

inline constexpr std::string_view feature_name(Feature f) {
    constexpr std::array<std::string_view, feature_count> names{"frequency", "skewness",  "mean",
                                                                "variance",  "linearity", "n_peaks"};
    return names[static_cast<std::size_t>(f)];
}

struct FeatureVector {
    double frequency = 0.0; // dominant cycles per sample, [0, 0.5]
    double skewness = 0.0;
    double mean = 0.0;
    double variance = 0.0;
    double linearity = 0.0; // sign(slope) · R², [-1, 1]
    long n_peaks = 0;

    double get(Feature f) const {
        switch (f) {
        case Feature::frequency: return frequency;
        case Feature::skewness: return skewness;
        case Feature::mean: return mean;
        case Feature::variance: return variance;
        case Feature::linearity: return linearity;
        case Feature::n_peaks: return static_cast<double>(n_peaks);
        }
        return 0.0;
    }

    void set(Feature f, double v) {
        switch (f) {
        case Feature::frequency: frequency = v; break;
        case Feature::skewness: skewness = v; break;
        case Feature::mean: mean = v; break;
        case Feature::variance: variance = v; break;
        case Feature::linearity: linearity = v; break;
        case Feature::n_peaks: n_peaks = std::lround(v); break;
        }
    }

    std::array<double, feature_count> as_array() const {
        std::array<double, feature_count> out{};
        for (auto f : all_features) out[static_cast<std::size_t>(f)] = get(f);
        return out;
    }

    bool operator==(const FeatureVector&) const = default;
};

inline constexpr std::size_t min_feature_length = 8;

/// Frequency: argmax over bins k = 1..⌊L/2⌋ of the magnitude periodogram,
/// divided by L (ties go to the lower bin; 0 for a constant series).
/// Skewness and variance use population moments; linearity is
/// sign(slope)·R² of the least-squares line; n_peaks counts strict
/// one-neighbour local maxima.
inline FeatureVector extract_features(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < min_feature_length) {
        throw InvalidArgument("extract_features: series length " + std::to_string(n) + " below minimum " +
                              std::to_string(min_feature_length));
    }
    const double dn = static_cast<double>(n);
    FeatureVector f;

    double sum = 0.0;
    for (double v : x) sum += v;
    const double mu = sum / dn;
    double m2 = 0.0, m3 = 0.0;
    for (double v : x) {
        const double d = v - mu;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= dn;
    m3 /= dn;
    // A constant series can leave rounding residue in the moments.
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    if (*lo == *hi) m2 = m3 = 0.0;
    f.mean = mu;
    f.variance = m2;
    f.skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;

    if (m2 > 0.0) {
        double best = -1.0;
        std::size_t best_k = 1;
        for (std::size_t k = 1; k <= n / 2; ++k) {
            double re = 0.0, im = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double angle = 2.0 * std::numbers::pi * static_cast<double>(k * i % n) / dn;
                re += (x[i] - mu) * std::cos(angle);
                im -= (x[i] - mu) * std::sin(angle);
            }
            const double power = re * re + im * im;
            if (power > best) {
                best = power;
                best_k = k;
            }
        }
        f.frequency = static_cast<double>(best_k) / dn;

        const double tbar = (dn - 1.0) / 2.0;
        double sxx = 0.0, sxy = 0.0, syy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double dt = static_cast<double>(i) - tbar;
            const double dy = x[i] - mu;
            sxx += dt * dt;
            sxy += dt * dy;
            syy += dy * dy;
        }
        const double r2 = std::min(1.0, sxy * sxy / (sxx * syy));
        f.linearity = sxy > 0.0 ? r2 : (sxy < 0.0 ? -r2 : 0.0);
    }

    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (x[i - 1] < x[i] && x[i] > x[i + 1]) ++f.n_peaks;
    }
    return f;
}

/// (x − min)/(max − min); a constant series maps to all 0.5.
inline std::vector<double> minmax_normalize(std::span<const double> x) {
    if (x.empty()) return {};
    const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
    const double lo = *lo_it, hi = *hi_it;
    std::vector<double> out(x.size(), 0.5);
    if (hi > lo) {
        const double range = hi - lo;
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - lo) / range;
    }
    return out;
}

} // namespace text2data
