#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <limits>
#include <memory>
#include <cmath>
#include <numbers>
#include <set>
#include <vector>

#include "text2data/synthdata.hpp"

using namespace text2data;

namespace {

// Independent periodogram: power at bin k via direct complex sums.
std::size_t brute_argmax_bin(const std::vector<double>& x) {
    const auto n = x.size();
    double mu = 0.0;
    for (double v : x) mu += v / static_cast<double>(n);
    std::size_t best = 1;
    double best_p = -1.0;
    for (std::size_t k = 1; k <= n / 2; ++k) {
        double re = 0.0, im = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double a = 2.0 * std::numbers::pi * static_cast<double>(k) * static_cast<double>(i) / static_cast<double>(n);
            re += (x[i] - mu) * std::cos(a);
            im += (x[i] - mu) * std::sin(a);
        }
        if (re * re + im * im > best_p + 1e-9) {
            best_p = re * re + im * im;
            best = k;
        }
    }
    return best;
}

long brute_peaks(const std::vector<double>& x) {
    long n = 0;
    for (std::size_t i = 1; i + 1 < x.size(); ++i) n += (x[i] > x[i - 1] && x[i] > x[i + 1]) ? 1 : 0;
    return n;
}

} // namespace

TEST_CASE("feature conventions on simple series", "[synthdata][features]") {
    const auto c = extract_features(std::vector<double>(16, 0.3));
    CHECK(c.variance == 0.0);
    CHECK(c.skewness == 0.0);
    CHECK(c.n_peaks == 0);
    CHECK(c.linearity == 0.0);
    CHECK(c.frequency == 0.0);

    std::vector<double> ramp(64);
    for (std::size_t i = 0; i < 64; ++i) ramp[i] = static_cast<double>(i) / 63.0;
    const auto r = extract_features(ramp);
    CHECK(r.mean == Catch::Approx(0.5).margin(1e-12));
    CHECK(r.linearity == Catch::Approx(1.0).margin(1e-12));
    CHECK(r.n_peaks == 0);
    std::reverse(ramp.begin(), ramp.end());
    CHECK(extract_features(ramp).linearity == Catch::Approx(-1.0).margin(1e-12));

    std::vector<double> sine(64);
    for (std::size_t i = 0; i < 64; ++i) sine[i] = std::sin(2.0 * std::numbers::pi * 5.0 * static_cast<double>(i) / 64.0);
    const auto s = extract_features(sine);
    CHECK(s.frequency == 5.0 / 64.0);
    CHECK(s.n_peaks == 5);
    CHECK(std::abs(s.mean) < 1e-9);
    CHECK(s.skewness == Catch::Approx(0.0).margin(1e-9));

    CHECK_THROWS_AS(extract_features(std::vector<double>(7, 1.0)), InvalidArgument);
}

TEST_CASE("extracted features agree with brute-force oracles", "[synthdata][features][property]") {
    const auto data = make_dataset(200, 64, 1.0, 11);
    for (const auto& rec : data.train.series) {
        const auto f = *rec.features;
        CHECK(f.frequency == static_cast<double>(brute_argmax_bin(rec.values)) / 64.0);
        CHECK(f.n_peaks == brute_peaks(rec.values));
        CHECK(f.frequency >= 0.0);
        CHECK(f.frequency <= 0.5);
        CHECK(f.variance >= 0.0);
        CHECK(std::abs(f.linearity) <= 1.0);
        CHECK(f.n_peaks <= 31);
        CHECK(f.mean >= 0.0);
        CHECK(f.mean <= 1.0);
    }
}

TEST_CASE("generator examples", "[synthdata][generate]") {
    GeneratorKnobs ramp;
    ramp.slope = 1.5;
    const auto rs = plan_series(ramp, 64, 1);
    const auto rf = extract_features(generate_series(rs, 64));
    CHECK(rf.linearity == Catch::Approx(1.0).margin(1e-12));
    CHECK(rf.n_peaks == 0);

    GeneratorKnobs sine;
    sine.cycles = 5;
    sine.amplitude = 1.0;
    const auto ss = plan_series(sine, 64, 1);
    const auto series = generate_series(ss, 64);
    const auto sf = extract_features(series);
    CHECK(sf.frequency == 5.0 / 64.0);
    CHECK(brute_argmax_bin(series) == 5);
    CHECK(sf.n_peaks == 5);
    CHECK(brute_peaks(series) == 5);

    auto noisy = plan_series(random_knobs(*std::make_unique<Rng>(4)), 64, 10);
    noisy.knobs.noise = 0.05;
    auto other = noisy;
    other.seed = 11;
    CHECK(generate_series(noisy, 64) == generate_series(noisy, 64));
    CHECK(generate_series(noisy, 64) != generate_series(other, 64));
}

TEST_CASE("generator rejects infeasible specs", "[synthdata][generate][errors]") {
    GeneratorKnobs k;
    k.slope = 1.0;
    auto spec = plan_series(k, 64, 1);
    spec.knobs.noise = 0.1;
    CHECK_THROWS_AS(generate_series(spec, 64), FeasibilityError);

    auto peaks = plan_series(k, 64, 1);
    peaks.target.n_peaks = 32;
    CHECK_THROWS_AS(generate_series(peaks, 64), FeasibilityError);

    auto freq = plan_series(k, 64, 1);
    freq.target.frequency = 0.6;
    CHECK_THROWS_AS(generate_series(freq, 64), FeasibilityError);

    CHECK_THROWS_AS(generate_series(spec, 7), InvalidArgument);
    GeneratorKnobs bad;
    bad.amplitude = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(plan_series(bad, 64, 1), InvalidArgument);
}

TEST_CASE("generator tolerance table covers 99% of 5000 specs", "[synthdata][generate][property]") {
    std::size_t within = 0;
    const std::size_t n = 5000;
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = make_rng(2024, "tolerance", i);
        const auto spec = plan_series(random_knobs(rng), 64, derive_seed(2024, "tolerance-noise", i));
        const auto f = extract_features(generate_series(spec, 64));
        bool ok = true;
        for (auto feat : all_features) ok = ok && std::abs(f.get(feat) - spec.target.get(feat)) <= generator_tolerance.get(feat);
        within += ok ? 1 : 0;
    }
    CHECK(within >= 99 * n / 100);
}

TEST_CASE("min-max normalization", "[synthdata][normalize]") {
    CHECK(minmax_normalize(std::vector<double>{2, 4, 6}) == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(minmax_normalize(std::vector<double>(5, 3.0)) == std::vector<double>(5, 0.5));
    CHECK(minmax_normalize(std::vector<double>{}).empty());
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        const auto x = standard_normal_vector(rng, 32);
        const auto once = minmax_normalize(x);
        CHECK(minmax_normalize(once) == once);
    }
}

TEST_CASE("dataset sizes and labeling", "[synthdata][dataset]") {
    const auto d = make_dataset(1000, 64, 0.1, 1);
    CHECK(d.train.size() == 800);
    CHECK(d.test.size() == 200);
    CHECK(d.train.labeled_count() == 80);
    CHECK(d.test.labeled_count() == 200);
    CHECK_NOTHROW(d.train.validate());
    CHECK_NOTHROW(d.test.validate());

    std::set<std::size_t> unique(d.train.manifest.labeled.begin(), d.train.manifest.labeled.end());
    CHECK(unique.size() == 80);
    std::set<std::size_t> train_ids, test_ids;
    for (const auto& r : d.train.series) train_ids.insert(r.id);
    for (const auto& r : d.test.series) {
        test_ids.insert(r.id);
        CHECK(r.text);
        CHECK(r.features);
    }
    std::vector<std::size_t> overlap;
    std::set_intersection(train_ids.begin(), train_ids.end(), test_ids.begin(), test_ids.end(), std::back_inserter(overlap));
    CHECK(overlap.empty());
    CHECK(train_ids.size() + test_ids.size() == 1000);

    for (std::size_t i = 0; i < d.train.size(); ++i) {
        const bool labeled = unique.count(i) > 0;
        CHECK(d.train.series[i].features.has_value() == labeled);
        CHECK(d.train.series[i].text.has_value() == labeled);
        if (labeled) CHECK(parse_text(*d.train.series[i].text).features() == d.train.series[i].features);
    }

    const auto full = make_dataset(100, 64, 1.0, 2);
    CHECK(full.train.labeled_count() == full.train.size());
}

TEST_CASE("dataset is deterministic and normalized", "[synthdata][dataset][property]") {
    const auto a = make_dataset(300, 64, 0.2, 9);
    const auto b = make_dataset(300, 64, 0.2, 9);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK_FALSE(make_dataset(300, 64, 0.2, 10).train == a.train);

    for (const auto* split : {&a.train, &a.test}) {
        for (const auto& r : split->series) {
            const auto [lo, hi] = std::minmax_element(r.values.begin(), r.values.end());
            if (*hi == *lo) continue;
            CHECK(std::abs(*lo) <= 1e-12);
            CHECK(std::abs(*hi - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("dataset argument errors", "[synthdata][dataset][errors]") {
    CHECK_THROWS_AS(make_dataset(9, 64, 0.1, 1), InvalidArgument);
    CHECK_THROWS_AS(make_dataset(100, 64, 0.0, 1), InvalidArgument);
    CHECK_THROWS_AS(make_dataset(100, 64, 1.5, 1), InvalidArgument);
    CHECK_THROWS_AS(make_dataset(100, 4, 0.1, 1), InvalidArgument);

    auto d = make_dataset(50, 16, 0.5, 1);
    d.train.manifest.labeled.push_back(d.train.manifest.labeled.front());
    CHECK_THROWS_AS(d.train.validate(), DataError);
}
