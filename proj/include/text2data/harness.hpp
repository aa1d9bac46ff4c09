#pragma once

// End-to-end pipeline on in-memory objects: stage-1 pretraining, the three
// finetuning modes, controllability evaluation and plot-data export.
// File-level wrappers live in pipeline.hpp.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "text2data/condition.hpp"
#include "text2data/diffusion.hpp"
#include "text2data/errors.hpp"
#include "text2data/features.hpp"
#include "text2data/lexopt.hpp"
#include "text2data/network.hpp"
#include "text2data/parallel.hpp"
#include "text2data/rng.hpp"
#include "text2data/schedule.hpp"
#include "text2data/synthdata.hpp"

namespace text2data {

enum class Mode { text2data, unconstrained, supervised };

inline std::string to_string(Mode m) {
    switch (m) {
    case Mode::text2data: return "text2data";
    case Mode::unconstrained: return "unconstrained";
    case Mode::supervised: return "supervised";
    }
    return "?";
}

inline Mode mode_from_string(const std::string& s) {
    if (s == "text2data") return Mode::text2data;
    if (s == "unconstrained") return Mode::unconstrained;
    if (s == "supervised") return Mode::supervised;
    throw ConfigError("unknown mode '" + s + "' (expected text2data, unconstrained or supervised)");
}

/// Default label fractions swept by the harness.
inline constexpr std::array<double, 5> default_label_fractions{0.02, 0.05, 0.10, 0.20, 0.40};

inline Tensor all_series_matrix(const Dataset& data) {
    std::vector<std::vector<double>> xs;
    xs.reserve(data.size());
    for (const auto& r : data.series) xs.push_back(r.values);
    return stack_series(xs);
}

/// Labeled records only, encoded against the manifest bins.
inline LabeledSet make_labeled_set(const Dataset& data, EncoderOptions enc = {}) {
    LabeledSet out;
    for (auto i : data.manifest.labeled) {
        const auto& rec = data.series.at(i);
        if (!rec.features) throw DataError("labeled series " + std::to_string(rec.id) + " has no features");
        out.series.push_back(rec.values);
        out.conditions.push_back(encode(*rec.features, data.manifest.bins, enc));
    }
    return out;
}

struct PretrainOptions {
    std::size_t epochs = 1200;
    std::size_t batch_size = 32;
    double learning_rate = 1.0;
    std::size_t xi_batches = 20;
};

struct PretrainResult {
    ScoreNetwork net;
    double initial_l1 = 0.0;
    double final_l1 = 0.0; // raw anchor ξ̂
    std::vector<double> losses;
    std::optional<std::string> failure;
};

/// Stage 1: minimize the unconditional loss over every series of D by
/// plain gradient descent (all conditions NULL).
inline PretrainResult pretrain(const Dataset& train, const Architecture& arch, const NoiseSchedule& schedule,
                               const PretrainOptions& opts, std::uint64_t seed) {
    if (train.size() == 0) throw DataError("pretrain: empty dataset");
    if (arch.series_length != train.manifest.length) throw ConfigError("pretrain: architecture length differs from dataset");
    const ScoreNetwork init = ScoreNetwork::initialize(arch, derive_seed(seed, "model-init"));
    const Tensor all = all_series_matrix(train);

    Rng eval_rng = make_rng(seed, "pretrain-eval");
    PretrainResult result;
    result.initial_l1 = compute_xi_hat(init, all, schedule, eval_rng, opts.xi_batches);

    LabeledSet pool;
    for (const auto& r : train.series) {
        pool.series.push_back(r.values);
        pool.conditions.push_back(ConditionVector::null(arch.cond_dim));
    }
    BatchLoader loader(pool, opts.batch_size);
    Rng rng = make_rng(seed, "pretrain");
    const PlainObjective objective = [&](const ParamSet& params, std::size_t) {
        const ScoreNetwork current = init.with_params(params);
        auto [x, conds] = loader.next(rng);
        auto r = loss_unconditional(current, x, schedule, rng);
        return PlainObjectiveValue{r.value, std::move(r.grad)};
    };
    auto run = plain_descent(init.params(), objective, opts.learning_rate, opts.epochs * loader.batches_per_epoch());
    result.net = init.with_params(std::move(run.params));
    result.losses = std::move(run.losses);
    result.failure = std::move(run.failure);

    Rng xi_rng = make_rng(seed, "pretrain-eval");
    try {
        result.final_l1 = compute_xi_hat(result.net, all, schedule, xi_rng, opts.xi_batches);
    } catch (const NumericalError& e) {
        // The last finite iterate can still overflow on a full pass.
        if (!result.failure) throw;
        result.final_l1 = std::numeric_limits<double>::infinity();
    }
    return result;
}

/// Finetuning defaults. β > 1 so that λ can turn positive when the two
/// gradients are nearly parallel; α sets how hard an excess over the level pushes.
inline LexoptConfig finetune_lexopt_defaults() {
    LexoptConfig c;
    c.alpha = 10.0;
    c.beta = 2.0;
    c.omega = 0.05;
    return c;
}

struct FinetuneConfig {
    Mode mode = Mode::text2data;
    LexoptConfig lexopt = finetune_lexopt_defaults();
    FinetuneOptions options{1000, 16};
    /// Step size for supervised mode, which trains from scratch like stage 1.
    double scratch_lr = PretrainOptions{}.learning_rate;
    std::uint64_t seed = 0;
    EncoderOptions encoder;
};

/// Dispatch on mode. text2data / unconstrained start from `stage1`;
/// supervised trains a fresh network on D_p alone.
inline FinetuneResult run_finetune(const std::optional<ScoreNetwork>& stage1, const Dataset& train,
                                   const NoiseSchedule& schedule, const FinetuneConfig& cfg,
                                   const Architecture& arch_for_supervised = {}) {
    const LabeledSet labeled = make_labeled_set(train, cfg.encoder);
    if (labeled.size() == 0) throw DataError("finetune: dataset has no labeled series");
    Rng rng = make_rng(cfg.seed, "finetune");
    switch (cfg.mode) {
    case Mode::text2data:
        if (!stage1) throw ConfigError("text2data mode requires a stage-1 checkpoint");
        if (!(cfg.lexopt.xi_hat > 0.0)) throw ConfigError("text2data mode requires a positive xi");
        return finetune(*stage1, labeled, schedule, cfg.lexopt, rng, cfg.options);
    case Mode::unconstrained:
        if (!stage1) throw ConfigError("unconstrained mode requires a stage-1 checkpoint");
        return plain_finetune(*stage1, labeled, schedule, cfg.lexopt.omega, cfg.lexopt.p_uncond, rng, cfg.options);
    case Mode::supervised: {
        auto arch = arch_for_supervised;
        arch.series_length = train.manifest.length;
        arch.cond_dim = cfg.encoder.dim();
        const auto fresh = ScoreNetwork::initialize(arch, derive_seed(cfg.seed, "model-init"));
        return plain_finetune(fresh, labeled, schedule, cfg.scratch_lr, cfg.lexopt.p_uncond, rng, cfg.options);
    }
    }
    throw ConfigError("unknown mode");
}

/// Held-out unconditional loss with common random numbers across models.
inline double heldout_unconditional_loss(const ScoreNetwork& net, const Dataset& data, const NoiseSchedule& schedule,
                                         std::uint64_t seed, std::size_t n_batches = 20) {
    Rng rng = make_rng(seed, "heldout");
    return compute_xi_hat(net, all_series_matrix(data), schedule, rng, n_batches);
}

// ---------------------------------------------------------------------------
// Controllability evaluation

/// Produces `n` series for a condition.
using SeriesGenerator =
    std::function<std::vector<std::vector<double>>(const ConditionVector&, std::size_t n, Rng& rng)>;

inline SeriesGenerator diffusion_generator(const ScoreNetwork& net, const NoiseSchedule& schedule, double w) {
    return [&net, &schedule, w](const ConditionVector& c, std::size_t n, Rng& rng) {
        std::vector<ConditionVector> conds(n, c);
        auto x = sample_batch(net, schedule, conds, w, rng);
        std::vector<std::vector<double>> out;
        for (std::size_t r = 0; r < n; ++r) {
            auto row = x.row(r);
            out.emplace_back(row.begin(), row.end());
        }
        return out;
    };
}

struct PlotPair {
    std::size_t prompt = 0;
    std::vector<double> ground_truth;
    std::vector<double> generated;

    bool operator==(const PlotPair&) const = default;
};

struct EvalReport {
    std::string mode;
    double label_fraction = 0.0;
    std::uint64_t seed = 0;
    double guidance = 0.0;
    std::size_t n_prompts = 0;
    std::size_t n_per_prompt = 0;
    std::array<double, feature_count> mae{};
    std::array<double, feature_count> null_mae{};
    /// Mean |f_i − f_j| over all ordered prompt pairs (i = j included): the
    /// expected MAE of a generator that ignores the prompt and resamples the
    /// test corpus.
    std::array<double, feature_count> baseline_spread{};
    std::vector<PlotPair> pairs;

    bool operator==(const EvalReport&) const = default;
};

struct EvalOptions {
    std::size_t n_per_prompt = 8;
    std::uint64_t seed = 0;
    std::size_t workers = 0; // 0: hardware concurrency
    bool null_baseline = true;
    std::size_t max_prompts = 0; // 0: all
};

namespace detail {

inline std::array<double, feature_count> abs_error(const FeatureVector& a, const FeatureVector& b) {
    std::array<double, feature_count> out{};
    for (auto f : all_features) out[static_cast<std::size_t>(f)] = std::abs(a.get(f) - b.get(f));
    return out;
}

} // namespace detail

/// Per test prompt: text → parse → encode → n samples → features, then the
/// mean absolute feature error, averaged over samples and then prompts.
inline EvalReport evaluate_controllability(const SeriesGenerator& generator, const Dataset& test, const EvalOptions& opts,
                                           EncoderOptions enc = {}) {
    if (opts.n_per_prompt == 0) throw InvalidArgument("evaluate: n_per_prompt must be positive");
    for (const auto& rec : test.series) {
        if (!rec.features || !rec.text) {
            throw InvalidArgument("evaluate: test series " + std::to_string(rec.id) + " is unlabeled");
        }
    }
    std::size_t n_prompts = test.size();
    if (opts.max_prompts) n_prompts = std::min(n_prompts, opts.max_prompts);
    if (n_prompts == 0) throw InvalidArgument("evaluate: empty test set");

    struct PromptResult {
        std::array<double, feature_count> mae{};
        std::array<double, feature_count> null_mae{};
        std::vector<double> first_sample;
    };
    std::vector<PromptResult> results(n_prompts);
    const auto& bins = test.manifest.bins;

    parallel_for(n_prompts, opts.workers, [&](std::size_t p) {
        const auto& rec = test.series[p];
        const FeatureVector& target = *rec.features;
        const auto parsed = parse_text(*rec.text);
        const auto cond = encode(parsed, bins, enc);
        auto mean_error = [&](const ConditionVector& c, Rng& rng, std::vector<double>* keep_first) {
            auto samples = generator(c, opts.n_per_prompt, rng);
            if (samples.size() != opts.n_per_prompt) throw InvalidArgument("evaluate: generator returned wrong count");
            std::array<double, feature_count> acc{};
            for (const auto& s : samples) {
                auto err = detail::abs_error(extract_features(s), target);
                for (std::size_t k = 0; k < feature_count; ++k) acc[k] += err[k];
            }
            for (auto& v : acc) v /= static_cast<double>(samples.size());
            if (keep_first) *keep_first = samples.front();
            return acc;
        };
        Rng rng = make_rng(opts.seed, "eval", p);
        results[p].mae = mean_error(cond, rng, &results[p].first_sample);
        if (opts.null_baseline) {
            Rng null_rng = make_rng(opts.seed, "eval-null", p);
            results[p].null_mae = mean_error(ConditionVector::null(cond.dim()), null_rng, nullptr);
        }
    });

    EvalReport report;
    report.seed = opts.seed;
    report.n_prompts = n_prompts;
    report.n_per_prompt = opts.n_per_prompt;
    report.label_fraction = test.manifest.label_fraction;
    for (std::size_t p = 0; p < n_prompts; ++p) {
        for (std::size_t k = 0; k < feature_count; ++k) {
            report.mae[k] += results[p].mae[k];
            report.null_mae[k] += results[p].null_mae[k];
        }
        report.pairs.push_back({p, test.series[p].values, std::move(results[p].first_sample)});
    }
    for (std::size_t k = 0; k < feature_count; ++k) {
        report.mae[k] /= static_cast<double>(n_prompts);
        report.null_mae[k] /= static_cast<double>(n_prompts);
        double spread = 0.0;
        for (std::size_t p = 0; p < n_prompts; ++p) {
            const double fp = test.series[p].features->get(all_features[k]);
            for (std::size_t q = 0; q < n_prompts; ++q) spread += std::abs(fp - test.series[q].features->get(all_features[k]));
        }
        report.baseline_spread[k] = spread / static_cast<double>(n_prompts * n_prompts);
    }
    return report;
}

} // namespace text2data
