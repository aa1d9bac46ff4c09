#pragma once

// Synthetic time-series corpus with controllable feature values.
//
// A series is  trend + sinusoid + smoothed noise,  standardized, passed
// through the monotone skew map u ↦ (exp(κu) − 1)/κ and min-max normalized.
// The skew map is strictly increasing, so it leaves peak positions alone.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "text2data/condition.hpp"
#include "text2data/errors.hpp"
#include "text2data/features.hpp"
#include "text2data/rng.hpp"

namespace text2data {

struct GeneratorKnobs {
    std::size_t cycles = 0;  // sinusoid cycles over the window
    double amplitude = 0.0;  // sinusoid amplitude
    double phase = 0.0;
    double slope = 0.0;      // trend rise across the whole window
    double skew = 0.0;       // κ of the skew map
    double noise = 0.0;      // smoothed-noise scale
};

struct SeriesSpec {
    FeatureVector target;
    GeneratorKnobs knobs;
    std::uint64_t seed = 0;
};

/// Largest admissible |Δfeature| between a generated series and its spec
/// target; holds for at least 99% of the default corpus.
struct FeatureTolerance {
    double frequency;
    double skewness;
    double mean;
    double variance;
    double linearity;
    double n_peaks;

    double get(Feature f) const {
        switch (f) {
        case Feature::frequency: return frequency;
        case Feature::skewness: return skewness;
        case Feature::mean: return mean;
        case Feature::variance: return variance;
        case Feature::linearity: return linearity;
        case Feature::n_peaks: return n_peaks;
        }
        return 0.0;
    }
};

// Per-feature 99.9th percentile of |Δ| over 5,000 default-corpus specs at
// length 64, so that at least 99% of specs meet all six jointly.
inline constexpr FeatureTolerance generator_tolerance{0.0625, 0.6, 0.07, 0.033, 0.073, 10.0};

namespace detail {

inline std::vector<double> clean_signal(const GeneratorKnobs& k, std::size_t length) {
    std::vector<double> u(length);
    const double denom = static_cast<double>(length - 1);
    for (std::size_t i = 0; i < length; ++i) {
        const double pos = static_cast<double>(i);
        u[i] = k.slope * (pos / denom - 0.5) +
               k.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(k.cycles) * pos /
                                          static_cast<double>(length) +
                                      k.phase);
    }
    return u;
}

inline std::vector<double> shape_and_normalize(std::vector<double> u, double skew) {
    const double n = static_cast<double>(u.size());
    const double mu = std::accumulate(u.begin(), u.end(), 0.0) / n;
    double var = 0.0;
    for (double v : u) var += (v - mu) * (v - mu);
    var /= n;
    if (var > 0.0 && skew != 0.0) {
        const double sd = std::sqrt(var);
        for (auto& v : u) v = std::expm1(skew * (v - mu) / sd) / skew;
    }
    return minmax_normalize(u);
}

inline bool finite_knobs(const GeneratorKnobs& k) {
    return std::isfinite(k.amplitude) && std::isfinite(k.phase) && std::isfinite(k.slope) && std::isfinite(k.skew) &&
           std::isfinite(k.noise);
}

} // namespace detail

/// Spec whose target is the feature vector of the noise-free series.
inline SeriesSpec plan_series(const GeneratorKnobs& knobs, std::size_t length, std::uint64_t seed) {
    if (length < min_feature_length) throw InvalidArgument("plan_series: length must be at least 8");
    if (!detail::finite_knobs(knobs)) throw InvalidArgument("plan_series: non-finite generator knob");
    SeriesSpec spec;
    spec.knobs = knobs;
    spec.seed = seed;
    auto clean = detail::shape_and_normalize(detail::clean_signal(knobs, length), knobs.skew);
    spec.target = extract_features(clean);
    return spec;
}

/// Deterministic in spec.seed. Throws FeasibilityError when the target
/// cannot be met by the knobs (e.g. a perfect linear fit with noise).
inline std::vector<double> generate_series(const SeriesSpec& spec, std::size_t length) {
    if (length < min_feature_length) throw InvalidArgument("generate_series: length must be at least 8");
    const auto& k = spec.knobs;
    const auto& t = spec.target;
    if (!detail::finite_knobs(k) || k.noise < 0.0 || k.amplitude < 0.0) {
        throw InvalidArgument("generate_series: knobs must be finite with nonnegative noise and amplitude");
    }
    if (std::abs(t.linearity) >= 1.0 && (k.noise > 0.0 || k.amplitude > 0.0)) {
        throw FeasibilityError("generate_series: linearity of exactly ±1 needs a noise-free, sinusoid-free series");
    }
    if (2 * k.cycles > length || t.frequency < 0.0 || t.frequency > 0.5) {
        throw FeasibilityError("generate_series: frequency must lie in [0, 0.5]");
    }
    if (t.n_peaks < 0 || static_cast<std::size_t>(t.n_peaks) > (length - 1) / 2) {
        throw FeasibilityError("generate_series: at most floor((L-1)/2) peaks fit in a series of length " +
                               std::to_string(length));
    }
    if (t.variance < 0.0 || std::abs(t.linearity) > 1.0) {
        throw FeasibilityError("generate_series: target outside feature bounds");
    }

    auto u = detail::clean_signal(k, length);
    if (k.noise > 0.0) {
        Rng rng(spec.seed);
        auto white = standard_normal_vector(rng, length + 4);
        // 5-tap moving average keeps the noise from adding a peak at every sample.
        for (std::size_t i = 0; i < length; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < 5; ++j) s += white[i + j];
            u[i] += k.noise * s / 5.0;
        }
    }
    return detail::shape_and_normalize(std::move(u), k.skew);
}

/// Knob ranges the default corpus is drawn from.
inline GeneratorKnobs random_knobs(Rng& rng) {
    std::uniform_int_distribution<std::size_t> cycles(1, 6);
    GeneratorKnobs k;
    k.cycles = cycles(rng);
    k.amplitude = uniform(rng, 0.2, 1.0);
    k.phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    k.slope = uniform(rng, -2.0, 2.0);
    k.skew = uniform(rng, -1.5, 1.5);
    k.noise = uniform(rng, 0.0, 0.08);
    return k;
}

/// One series in a dataset split. `id` is its index in the generated corpus.
struct SeriesRecord {
    std::size_t id = 0;
    std::vector<double> values;
    std::optional<FeatureVector> features;
    std::optional<std::string> text;

    bool operator==(const SeriesRecord&) const = default;
};

struct DatasetManifest {
    std::string split;         // "train" or "test"
    std::size_t length = 0;
    std::uint64_t seed = 0;
    double label_fraction = 0.0;
    double train_ratio = 0.8;
    std::size_t corpus_size = 0;
    QuintileBins bins;
    std::vector<std::size_t> labeled; // positions into Dataset::series

    bool operator==(const DatasetManifest&) const = default;
};

/// All series of a split (D) plus the labeled positions (D_p).
struct Dataset {
    std::vector<SeriesRecord> series;
    DatasetManifest manifest;

    std::size_t size() const noexcept { return series.size(); }
    std::size_t labeled_count() const noexcept { return manifest.labeled.size(); }

    /// Throws DataError if labeled positions are out of range, repeated or lack a label.
    void validate() const {
        std::vector<bool> seen(series.size(), false);
        for (auto i : manifest.labeled) {
            if (i >= series.size()) throw DataError("dataset: labeled index " + std::to_string(i) + " out of range");
            if (seen[i]) throw DataError("dataset: labeled index " + std::to_string(i) + " repeated");
            seen[i] = true;
            if (!series[i].features) throw DataError("dataset: labeled series " + std::to_string(i) + " has no features");
        }
        for (const auto& s : series) {
            if (s.values.size() != manifest.length) {
                throw DataError("dataset: series " + std::to_string(s.id) + " has length " +
                                std::to_string(s.values.size()) + ", manifest says " + std::to_string(manifest.length));
            }
        }
    }

    bool operator==(const Dataset&) const = default;
};

struct DatasetPair {
    Dataset train;
    Dataset test;
};

/// Generates n series, splits 80/20, labels ⌊label_fraction · n_train⌋
/// uniformly chosen training series and every test series.
inline DatasetPair make_dataset(std::size_t n, std::size_t length, double label_fraction, std::uint64_t seed) {
    if (n < 10) throw InvalidArgument("make_dataset: need at least 10 series");
    if (!(label_fraction > 0.0 && label_fraction <= 1.0)) throw InvalidArgument("make_dataset: label fraction must be in (0, 1]");
    if (length < min_feature_length) throw InvalidArgument("make_dataset: length must be at least 8");

    std::vector<SeriesRecord> corpus(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = make_rng(seed, "series", i);
        auto knobs = random_knobs(rng);
        auto spec = plan_series(knobs, length, derive_seed(seed, "noise", i));
        corpus[i].id = i;
        corpus[i].values = generate_series(spec, length);
        corpus[i].features = extract_features(corpus[i].values);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng split_rng = make_rng(seed, "split");
    std::shuffle(order.begin(), order.end(), split_rng);
    const std::size_t n_train = n * 4 / 5;
    std::vector<std::size_t> train_ids(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test_ids(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(train_ids.begin(), train_ids.end());
    std::sort(test_ids.begin(), test_ids.end());

    std::vector<FeatureVector> train_features;
    for (auto id : train_ids) train_features.push_back(*corpus[id].features);
    const QuintileBins bins = compute_bins(train_features);

    auto base_manifest = [&](std::string split) {
        DatasetManifest m;
        m.split = std::move(split);
        m.length = length;
        m.seed = seed;
        m.label_fraction = label_fraction;
        m.corpus_size = n;
        m.bins = bins;
        return m;
    };

    DatasetPair out;
    out.train.manifest = base_manifest("train");
    out.test.manifest = base_manifest("test");

    const auto n_labeled = static_cast<std::size_t>(std::floor(label_fraction * static_cast<double>(n_train)));
    std::vector<std::size_t> positions(n_train);
    std::iota(positions.begin(), positions.end(), std::size_t{0});
    Rng label_rng = make_rng(seed, "labels");
    std::shuffle(positions.begin(), positions.end(), label_rng);
    positions.resize(n_labeled);
    std::sort(positions.begin(), positions.end());
    std::vector<bool> is_labeled(n_train, false);
    for (auto p : positions) is_labeled[p] = true;

    for (std::size_t p = 0; p < n_train; ++p) {
        SeriesRecord rec = corpus[train_ids[p]];
        if (is_labeled[p]) {
            Rng text_rng = make_rng(seed, "text", rec.id);
            rec.text = render_text(*rec.features, TextKind::exact, nullptr, text_rng);
        } else {
            rec.features.reset();
        }
        out.train.series.push_back(std::move(rec));
    }
    out.train.manifest.labeled = positions;

    for (std::size_t p = 0; p < test_ids.size(); ++p) {
        SeriesRecord rec = corpus[test_ids[p]];
        Rng text_rng = make_rng(seed, "text", rec.id);
        rec.text = render_text(*rec.features, TextKind::exact, nullptr, text_rng);
        out.test.series.push_back(std::move(rec));
        out.test.manifest.labeled.push_back(p);
    }
    return out;
}

} // namespace text2data
