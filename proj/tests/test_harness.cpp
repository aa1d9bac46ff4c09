#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include "test_support.hpp"
#include "text2data/harness.hpp"

using namespace text2data;
using t2d_test::small_arch;

namespace {

const DatasetPair& shared_data() {
    static const DatasetPair d = make_dataset(250, 32, 0.1, 21);
    return d;
}

Architecture arch32() {
    auto a = small_arch(32);
    a.hidden = {32, 32};
    return a;
}

// Returns the ground-truth series of whichever prompt encodes to `c`.
SeriesGenerator oracle_generator(const Dataset& test) {
    auto table = std::make_shared<std::map<std::vector<double>, std::vector<double>>>();
    for (const auto& r : test.series) (*table)[encode(*r.features, test.manifest.bins).values()] = r.values;
    return [table](const ConditionVector& c, std::size_t n, Rng&) {
        const auto it = table->find(c.values());
        return std::vector<std::vector<double>>(n, it == table->end() ? std::vector<double>() : it->second);
    };
}

// Ignores the prompt; draws test series uniformly with replacement.
SeriesGenerator resampling_generator(const Dataset& test) {
    return [&test](const ConditionVector&, std::size_t n, Rng& rng) {
        std::uniform_int_distribution<std::size_t> pick(0, test.size() - 1);
        std::vector<std::vector<double>> out;
        for (std::size_t i = 0; i < n; ++i) out.push_back(test.series[pick(rng)].values);
        return out;
    };
}

} // namespace

TEST_CASE("perfect generator has zero error", "[harness][eval]") {
    const auto& test = shared_data().test;
    EvalOptions opts;
    opts.n_per_prompt = 2;
    opts.null_baseline = false;
    const auto r = evaluate_controllability(oracle_generator(test), test, opts);
    CHECK(r.n_prompts == test.size());
    for (double v : r.mae) CHECK(v == 0.0);
    REQUIRE(r.pairs.size() == test.size());
    CHECK(r.pairs[3].generated == r.pairs[3].ground_truth);
}

TEST_CASE("prompt-blind resampling matches the pairwise spread", "[harness][eval]") {
    const auto& test = shared_data().test;
    EvalOptions opts;
    opts.n_per_prompt = 64;
    opts.seed = 4;
    const auto r = evaluate_controllability(resampling_generator(test), test, opts);

    // Corpus mean absolute deviation over all ordered pairs, computed here.
    for (auto f : all_features) {
        const auto k = static_cast<std::size_t>(f);
        double mad = 0.0;
        for (const auto& a : test.series)
            for (const auto& b : test.series) mad += std::abs(a.features->get(f) - b.features->get(f));
        mad /= static_cast<double>(test.size() * test.size());
        INFO(feature_name(f));
        CHECK(r.baseline_spread[k] == Catch::Approx(mad).epsilon(1e-12));
        CHECK(std::abs(r.mae[k] - mad) <= 0.1 * mad);
        CHECK(std::abs(r.null_mae[k] - mad) <= 0.1 * mad);
    }
}

TEST_CASE("report matches a hand computation on two prompts", "[harness][eval]") {
    Dataset test = shared_data().test;
    test.series.resize(2);
    test.manifest.labeled = {0, 1};
    // Each prompt receives the other prompt's series.
    const auto s0 = test.series[0].values, s1 = test.series[1].values;
    const SeriesGenerator swap = [&](const ConditionVector& c, std::size_t n, Rng&) {
        const bool first = c == encode(*test.series[0].features, test.manifest.bins);
        return std::vector<std::vector<double>>(n, first ? s1 : s0);
    };
    EvalOptions opts;
    opts.n_per_prompt = 1;
    opts.null_baseline = false;
    const auto r = evaluate_controllability(swap, test, opts);
    const auto f0 = *test.series[0].features, f1 = *test.series[1].features;
    const auto g0 = extract_features(s1), g1 = extract_features(s0);
    for (auto f : all_features) {
        const double expected = 0.5 * (std::abs(g0.get(f) - f0.get(f)) + std::abs(g1.get(f) - f1.get(f)));
        CHECK(std::abs(r.mae[static_cast<std::size_t>(f)] - expected) < 1e-12);
        const double spread = 0.5 * std::abs(f0.get(f) - f1.get(f));
        CHECK(std::abs(r.baseline_spread[static_cast<std::size_t>(f)] - spread) < 1e-12);
    }
}

TEST_CASE("evaluation rejects unlabeled test items", "[harness][eval][errors]") {
    Dataset test = shared_data().test;
    test.series[1].features.reset();
    CHECK_THROWS_AS(evaluate_controllability(resampling_generator(test), test, {}), InvalidArgument);
    EvalOptions zero;
    zero.n_per_prompt = 0;
    CHECK_THROWS_AS(evaluate_controllability(resampling_generator(shared_data().test), shared_data().test, zero),
                    InvalidArgument);
}

TEST_CASE("evaluation is deterministic across worker counts", "[harness][eval]") {
    const auto& test = shared_data().test;
    EvalOptions a, b;
    a.workers = 1;
    b.workers = 3;
    a.max_prompts = b.max_prompts = 20;
    CHECK(evaluate_controllability(resampling_generator(test), test, a) ==
          evaluate_controllability(resampling_generator(test), test, b));
}

TEST_CASE("pretraining: no-op, determinism and loss reduction", "[harness][pretrain]") {
    const auto& data = shared_data();
    const NoiseSchedule s;
    PretrainOptions zero;
    zero.epochs = 0;
    const auto none = pretrain(data.train, arch32(), s, zero, 5);
    CHECK(none.net == ScoreNetwork::initialize(arch32(), derive_seed(5, "model-init")));
    CHECK(none.losses.empty());

    PretrainOptions opts;
    opts.epochs = 150;
    const auto a = pretrain(data.train, arch32(), s, opts, 5);
    const auto b = pretrain(data.train, arch32(), s, opts, 5);
    CHECK(a.net == b.net);
    CHECK(a.final_l1 == b.final_l1);
    REQUIRE_FALSE(a.failure);
    CHECK(a.final_l1 < 0.5 * a.initial_l1);

    auto wrong = arch32();
    wrong.series_length = 16;
    CHECK_THROWS_AS(pretrain(data.train, wrong, s, opts, 5), ConfigError);
}

TEST_CASE("finetune dispatch and mode requirements", "[harness][finetune]") {
    const auto& data = shared_data();
    const NoiseSchedule s;
    const auto np = data.train.labeled_count();
    REQUIRE(np == 20);

    FinetuneConfig sup;
    sup.mode = Mode::supervised;
    sup.options = {3, 8};
    sup.lexopt.omega = 0.1;
    const auto r = run_finetune(std::nullopt, data.train, s, sup, arch32());
    CHECK(r.touches == 3 * np);
    CHECK(r.losses.size() == 3 * 3);
    CHECK(r.trace.empty());

    FinetuneConfig t2d;
    t2d.options = {1, 8};
    CHECK_THROWS_AS(run_finetune(std::nullopt, data.train, s, t2d, arch32()), ConfigError);
    const auto stage1 = ScoreNetwork::initialize(arch32(), 1);
    CHECK_THROWS_AS(run_finetune(stage1, data.train, s, t2d, arch32()), ConfigError); // ξ̂ missing
    t2d.lexopt.xi_hat = 0.2;
    const auto t = run_finetune(stage1, data.train, s, t2d, arch32());
    CHECK(t.trace.size() == 3);
    CHECK(t.touches == np);

    FinetuneConfig unc;
    unc.mode = Mode::unconstrained;
    CHECK_THROWS_AS(run_finetune(std::nullopt, data.train, s, unc, arch32()), ConfigError);

    Dataset unlabeled = data.train;
    unlabeled.manifest.labeled.clear();
    CHECK_THROWS_AS(run_finetune(std::nullopt, unlabeled, s, sup, arch32()), DataError);

    CHECK(mode_from_string("supervised") == Mode::supervised);
    CHECK_THROWS_AS(mode_from_string("other"), ConfigError);
}

TEST_CASE("held-out loss uses common random numbers", "[harness]") {
    const auto& data = shared_data();
    const NoiseSchedule s;
    const auto net = ScoreNetwork::initialize(arch32(), 2);
    CHECK(heldout_unconditional_loss(net, data.test, s, 1) == heldout_unconditional_loss(net, data.test, s, 1));
    // A zero-output network scores the mean squared noise of the shared draws.
    CHECK(std::abs(heldout_unconditional_loss(net, data.test, s, 1) - 1.0) < 0.05);
}
