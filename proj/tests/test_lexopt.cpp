#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "test_support.hpp"
#include "text2data/lexopt.hpp"

using namespace text2data;
using t2d_test::dual_oracle;
using t2d_test::random_point;
using t2d_test::small_arch;

namespace {

ParamSet vec_params(std::vector<double> v) {
    ParamSet p;
    p.add("theta", Tensor::vector(std::move(v)));
    return p;
}

ParamSet vec_grad(std::vector<double> v) { return vec_params(std::move(v)); }

// L2 = ‖θ − (2,2)‖², L1' = ‖θ‖²; both deterministic.
LexObjectiveValue quadratic_toy(const ParamSet& p, std::size_t) {
    const double a = p["theta"][0], b = p["theta"][1];
    return {(a - 2) * (a - 2) + (b - 2) * (b - 2), vec_grad({2 * (a - 2), 2 * (b - 2)}), a * a + b * b,
            vec_grad({2 * a, 2 * b})};
}

LabeledSet random_labeled(Rng& rng, std::size_t n, std::size_t length) {
    LabeledSet set;
    for (std::size_t i = 0; i < n; ++i) {
        set.series.push_back(standard_normal_vector(rng, length));
        std::vector<double> c(12);
        for (auto& v : c) v = uniform(rng, -1.0, 1.0);
        set.conditions.emplace_back(std::move(c));
    }
    return set;
}

} // namespace

TEST_CASE("config validation and anchors", "[lexopt]") {
    LexoptConfig cfg;
    cfg.xi_hat = 0.8;
    CHECK_NOTHROW(cfg.validate());
    cfg.rho = 1.0;
    CHECK(cfg.relaxed_anchor() == 0.8);
    cfg.rho = 1.05;
    cfg.gamma = 2.0;
    CHECK(cfg.constraint_level() == Catch::Approx(2.0 * 1.05 * 0.8));

    for (auto bad : {&LexoptConfig::alpha, &LexoptConfig::beta, &LexoptConfig::gamma, &LexoptConfig::omega}) {
        LexoptConfig c;
        c.*bad = 0.0;
        CHECK_THROWS_AS(c.validate(), InvalidArgument);
    }
    LexoptConfig c;
    c.p_uncond = 1.5;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.rho = 0.99;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.xi_hat = -1.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("xi_hat from a constant stub", "[lexopt][xi]") {
    Rng rng(1);
    CHECK(compute_xi_hat([](Rng&) { return 0.5; }, rng, 7) == 0.5);
    CHECK_THROWS_AS(compute_xi_hat([](Rng&) { return 0.5; }, rng, 0), InvalidArgument);
}

TEST_CASE("xi_hat is stable over 400 batches", "[lexopt][xi]") {
    const auto arch = small_arch();
    Rng rng(2);
    const auto base = ScoreNetwork::initialize(arch, 2);
    const auto net = base.with_params(random_point(base.params(), rng, 0.2));
    const auto data = Tensor::matrix(64, arch.series_length, standard_normal_vector(rng, 64 * arch.series_length));
    const NoiseSchedule s;
    Rng a = make_rng(10, "xi"), b = make_rng(11, "xi");
    const double x1 = compute_xi_hat(net, data, s, a, 400);
    const double x2 = compute_xi_hat(net, data, s, b, 400);
    CHECK(std::abs(x1 - x2) / std::max(x1, x2) < 0.02);
}

TEST_CASE("barrier phi examples", "[lexopt][phi]") {
    LexoptConfig cfg;
    cfg.rho = 1.0;
    cfg.xi_hat = 1.0;
    CHECK(barrier_phi(1.0, 0.7, cfg) == 0.0);
    CHECK(barrier_phi(2.0, 0.5, cfg) == 0.5);
    CHECK(barrier_phi(0.4, 0.0, cfg) == Catch::Approx(-0.6));
    cfg.alpha = 3.0;
    CHECK(barrier_phi(0.4, 0.0, cfg) == Catch::Approx(-1.8));
}

TEST_CASE("barrier phi sign property", "[lexopt][phi][property]") {
    Rng rng(3);
    for (int i = 0; i < 2000; ++i) {
        LexoptConfig cfg;
        cfg.alpha = uniform(rng, 0.01, 10.0);
        cfg.beta = uniform(rng, 0.01, 10.0);
        cfg.gamma = uniform(rng, 0.5, 2.0);
        cfg.rho = uniform(rng, 1.0, 1.5);
        cfg.xi_hat = uniform(rng, 0.0, 2.0);
        const double l1p = uniform(rng, 0.0, 4.0);
        const double gsq = i % 5 == 0 ? 0.0 : uniform(rng, 0.0, 3.0);
        const double phi = barrier_phi(l1p, gsq, cfg);
        if (cfg.alpha * (l1p - cfg.constraint_level()) <= 0.0) CHECK(phi <= 0.0);
        if (l1p > cfg.constraint_level() && gsq > 0.0) CHECK(phi > 0.0);
    }
}

TEST_CASE("lambda weight examples", "[lexopt][lambda]") {
    const std::vector<double> e1{1, 0}, e2{0, 1}, zero{0, 0};
    CHECK(lambda_weight(0.5, e1, e1, 1e-12) == 0.0);
    CHECK(lambda_weight(1.0, e2, e1, 1e-12) == 1.0);
    CHECK(lambda_weight(5.0, e2, zero, 1e-12) == 0.0);
    CHECK(lambda_weight(5.0, e2, std::vector<double>{1e-7, 0}, 1e-12) == 0.0);
    CHECK_THROWS_AS(lambda_weight(1.0, e1, std::vector<double>{1, 0, 0}, 1e-12), InvalidArgument);
}

TEST_CASE("lambda weight matches the dual oracle", "[lexopt][lambda][property]") {
    Rng rng(4);
    int active = 0;
    for (int i = 0; i < 500; ++i) {
        const std::size_t n = 1 + i % 6;
        const auto g2 = standard_normal_vector(rng, n);
        const auto g1 = standard_normal_vector(rng, n);
        if (norm_squared(g1) <= 1e-12) continue;
        const double phi = 3.0 * standard_normal(rng);
        const double lam = lambda_weight(phi, g2, g1, 1e-12);
        const double oracle = dual_oracle(phi, g2, g1);
        CHECK(lam >= 0.0);
        CHECK(std::abs(lam - oracle) < 1e-6);
        if (phi >= 0.0) {
            double progress = 0.0;
            for (std::size_t k = 0; k < n; ++k) progress += g1[k] * (g2[k] + lam * g1[k]);
            CHECK(progress >= phi - 1e-9);
        }
        if (lam > 0.0) ++active;
    }
    CHECK(active > 50);
}

TEST_CASE("lex_step examples and purity", "[lexopt][step]") {
    const auto theta = vec_params({1, 1});
    const auto g2 = vec_grad({0, 1}), g1 = vec_grad({1, 0});
    const auto next = lex_step(theta, g2, g1, 1.0, 0.1);
    CHECK(next["theta"][0] == Catch::Approx(0.9));
    CHECK(next["theta"][1] == Catch::Approx(0.9));
    CHECK(lex_step(theta, g2, g1, 1.0, 0.1) == next);

    const auto plain = lex_step(theta, g2, g1, 0.0, 0.1);
    CHECK(plain["theta"][0] == 1.0);
    CHECK(plain["theta"][1] == 1.0 - 0.1 * 1.0);
    CHECK(lex_step(theta, g2, g1, 0.7, 0.0) == theta);

    CHECK_THROWS_AS(lex_step(theta, vec_grad({1, 2, 3}), g1, 0.0, 0.1), InvalidArgument);
}

TEST_CASE("quadratic toy converges to the grid-search constrained optimum", "[lexopt][toy]") {
    LexoptConfig cfg;
    cfg.rho = 1.0;
    cfg.xi_hat = 1.0;
    cfg.omega = 0.01;
    auto run = lexicographic_descent(vec_params({-1.5, 0.5}), quadratic_toy, cfg, 20000);
    REQUIRE_FALSE(run.failure);

    // Grid oracle over [−3, 3]² at 1e-3.
    double best = std::numeric_limits<double>::infinity(), bx = 0, by = 0;
    for (int i = 0; i <= 6000; ++i) {
        const double a = -3.0 + i * 1e-3;
        for (int j = 0; j <= 6000; ++j) {
            const double b = -3.0 + j * 1e-3;
            if (a * a + b * b > 1.0) continue;
            const double v = (a - 2) * (a - 2) + (b - 2) * (b - 2);
            if (v < best) {
                best = v;
                bx = a;
                by = b;
            }
        }
    }
    CHECK(std::hypot(run.params["theta"][0] - bx, run.params["theta"][1] - by) < 1e-2);

    for (const auto& tr : run.trace) {
        CHECK(tr.lambda >= 0.0);
        CHECK(tr.dual_ok);
    }
}

TEST_CASE("plain descent is monotone on a convex quadratic", "[lexopt][toy]") {
    const PlainObjective f = [](const ParamSet& p, std::size_t) {
        const double a = p["theta"][0], b = p["theta"][1];
        return PlainObjectiveValue{3 * a * a + 0.5 * b * b + a * b, vec_grad({6 * a + b, b + a})};
    };
    auto run = plain_descent(vec_params({2.0, -3.0}), f, 0.05, 300);
    REQUIRE(run.losses.size() == 300);
    for (std::size_t i = 1; i < run.losses.size(); ++i) CHECK(run.losses[i] <= run.losses[i - 1]);
    CHECK_THROWS_AS(plain_descent(vec_params({1.0}), f, 0.0, 1), InvalidArgument);
}

TEST_CASE("lexicographic descent reduces to plain descent when never binding", "[lexopt][toy]") {
    LexoptConfig cfg;
    cfg.xi_hat = 1e6;
    cfg.omega = 0.05;
    auto lex = lexicographic_descent(vec_params({-1.0, 0.3}), quadratic_toy, cfg, 200);
    const PlainObjective f = [](const ParamSet& p, std::size_t s) {
        auto v = quadratic_toy(p, s);
        return PlainObjectiveValue{v.l2, v.grad_l2};
    };
    auto plain = plain_descent(vec_params({-1.0, 0.3}), f, 0.05, 200);
    CHECK(lex.params == plain.params);
    for (const auto& tr : lex.trace) CHECK(tr.lambda == 0.0);
}

TEST_CASE("finetune equals plain finetune when lambda stays zero", "[lexopt][finetune]") {
    const auto arch = small_arch();
    Rng data_rng(5);
    const auto labeled = random_labeled(data_rng, 12, arch.series_length);
    const auto net = ScoreNetwork::initialize(arch, 5);
    const NoiseSchedule s;
    LexoptConfig cfg;
    cfg.xi_hat = 1e6;
    cfg.omega = 0.05;
    Rng a(9), b(9);
    const auto lex = finetune(net, labeled, s, cfg, a, {3, 5});
    const auto plain = plain_finetune(net, labeled, s, cfg.omega, cfg.p_uncond, b, {3, 5});
    REQUIRE(lex.trace.size() == 9);
    for (const auto& tr : lex.trace) REQUIRE(tr.lambda == 0.0);
    CHECK(lex.net == plain.net);
    CHECK(lex.touches == 36);
    CHECK(plain.touches == 36);
    for (std::size_t i = 0; i < 9; ++i) CHECK(lex.trace[i].l2 == plain.losses[i]);
}

TEST_CASE("traced finetune steps satisfy the dual constraint", "[lexopt][finetune][property]") {
    const auto arch = small_arch();
    Rng data_rng(6);
    const auto labeled = random_labeled(data_rng, 16, arch.series_length);
    const auto base = ScoreNetwork::initialize(arch, 6);
    const auto net = base.with_params(random_point(base.params(), data_rng, 0.1));
    const NoiseSchedule s;
    LexoptConfig cfg;
    cfg.xi_hat = 0.3; // tight enough that λ is active on some steps
    cfg.omega = 0.05;
    cfg.alpha = cfg.beta = 10.0;
    Rng rng(7);
    const auto res = finetune(net, labeled, s, cfg, rng, {10, 4});
    REQUIRE_FALSE(res.failure);
    std::size_t binding = 0;
    for (const auto& tr : res.trace) {
        CHECK(tr.lambda >= 0.0);
        CHECK(tr.dual_ok);
        if (tr.lambda > 0.0) ++binding;
    }
    CHECK(binding > 0);
}

TEST_CASE("finetune rejects an empty labeled set", "[lexopt][errors]") {
    const auto net = ScoreNetwork::initialize(small_arch(), 1);
    LabeledSet empty;
    LexoptConfig cfg;
    Rng rng(1);
    CHECK_THROWS_AS(finetune(net, empty, NoiseSchedule{}, cfg, rng, {1, 4}), InvalidArgument);
    CHECK_THROWS_AS(plain_finetune(net, empty, NoiseSchedule{}, 0.1, 0.1, rng, {1, 4}), InvalidArgument);
}

TEST_CASE("condition dropout only replaces by NULL", "[lexopt]") {
    Rng rng(8);
    std::vector<ConditionVector> conds(2000, ConditionVector(std::vector<double>(12, 0.5)));
    apply_condition_dropout(conds, 0.1, rng);
    std::size_t nulls = 0;
    for (const auto& c : conds) {
        if (c.is_null()) ++nulls;
        else CHECK(c.values() == std::vector<double>(12, 0.5));
    }
    CHECK(nulls > 140);
    CHECK(nulls < 260);
}
