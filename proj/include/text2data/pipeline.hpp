#pragma once

// File-level pipeline stages behind the CLI: each reads its inputs from disk,
// runs one harness stage and writes its outputs.

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "text2data/bounds.hpp"
#include "text2data/condition.hpp"
#include "text2data/diffusion.hpp"
#include "text2data/errors.hpp"
#include "text2data/harness.hpp"
#include "text2data/io.hpp"
#include "text2data/lexopt.hpp"
#include "text2data/network.hpp"
#include "text2data/schedule.hpp"
#include "text2data/synthdata.hpp"

namespace text2data {

struct GenDataConfig {
    std::size_t n = 1000;
    std::size_t length = 64;
    double label_fraction = 0.10;
    std::uint64_t seed = 0;
    fs::path out;
};

inline DatasetPair run_gen_data(const GenDataConfig& cfg) {
    if (cfg.out.empty()) throw ConfigError("gen-data: --out is required");
    DatasetPair data;
    try {
        data = make_dataset(cfg.n, cfg.length, cfg.label_fraction, cfg.seed);
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    save_dataset(cfg.out, data);
    return data;
}

struct PretrainConfig {
    fs::path data;
    fs::path out;
    PretrainOptions options;
    std::vector<std::size_t> hidden{128, 128, 128};
    std::uint64_t seed = 0;
};

inline Checkpoint run_pretrain_files(const PretrainConfig& cfg) {
    if (cfg.data.empty() || cfg.out.empty()) throw ConfigError("pretrain: --data and --out are required");
    const Dataset train = load_split(cfg.data, "train");
    Architecture arch;
    arch.series_length = train.manifest.length;
    arch.hidden = cfg.hidden;
    arch.cond_dim = EncoderOptions{}.dim();
    const NoiseSchedule schedule;
    auto result = pretrain(train, arch, schedule, cfg.options, cfg.seed);

    Checkpoint ck{result.net, schedule, "pretrain", cfg.seed, {}};
    ck.meta["epochs"] = std::to_string(cfg.options.epochs);
    ck.meta["batch_size"] = std::to_string(cfg.options.batch_size);
    ck.meta["learning_rate"] = detail::shortest_decimal(cfg.options.learning_rate);
    ck.meta["initial_l1"] = detail::shortest_decimal(result.initial_l1);
    ck.meta["final_l1"] = detail::shortest_decimal(result.final_l1);
    if (result.failure) ck.meta["failure"] = *result.failure;
    save_checkpoint(cfg.out, ck);
    if (result.failure) throw NumericalError("pretrain stopped early (" + *result.failure + "); last good parameters saved");
    return ck;
}

struct FinetuneFileConfig {
    Mode mode = Mode::text2data;
    fs::path data;
    std::optional<fs::path> init;
    std::optional<double> xi; // raw anchor; defaults to the init checkpoint's final_l1
    LexoptConfig lexopt = finetune_lexopt_defaults();
    FinetuneOptions options = FinetuneConfig{}.options;
    double scratch_lr = FinetuneConfig{}.scratch_lr;  // supervised only
    std::vector<std::size_t> hidden{128, 128, 128}; // supervised only
    std::uint64_t seed = 0;
    fs::path out;
    std::optional<fs::path> trace_out;
};

struct FinetuneFileResult {
    Checkpoint checkpoint;
    FinetuneResult result;
};

inline FinetuneFileResult run_finetune_files(const FinetuneFileConfig& cfg) {
    if (cfg.data.empty() || cfg.out.empty()) throw ConfigError("finetune: --data and --out are required");
    FinetuneConfig fc;
    fc.mode = cfg.mode;
    fc.lexopt = cfg.lexopt;
    fc.options = cfg.options;
    fc.scratch_lr = cfg.scratch_lr;
    fc.seed = cfg.seed;

    std::optional<ScoreNetwork> stage1;
    NoiseSchedule schedule;
    if (cfg.mode != Mode::supervised) {
        if (!cfg.init) throw ConfigError(to_string(cfg.mode) + " mode requires --init (a stage-1 checkpoint)");
        auto ck = load_checkpoint(*cfg.init);
        stage1 = ck.net;
        schedule = ck.schedule;
        if (cfg.xi) {
            fc.lexopt.xi_hat = *cfg.xi;
        } else if (auto it = ck.meta.find("final_l1"); it != ck.meta.end()) {
            fc.lexopt.xi_hat = detail::parse_double(it->second, "final_l1");
        } else if (cfg.mode == Mode::text2data) {
            throw ConfigError("text2data mode requires --xi or an init checkpoint recording final_l1");
        }
    }
    try {
        fc.lexopt.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }

    // Supervised training never parses unlabeled records.
    const Dataset train = load_split(cfg.data, "train", cfg.mode == Mode::supervised);
    Architecture arch;
    arch.hidden = cfg.hidden;
    auto result = run_finetune(stage1, train, schedule, fc, arch);

    Checkpoint ck{result.net, schedule, "finetune", cfg.seed, {}};
    ck.meta["mode"] = to_string(cfg.mode);
    ck.meta["label_fraction"] = detail::shortest_decimal(train.manifest.label_fraction);
    ck.meta["epochs"] = std::to_string(cfg.options.epochs);
    ck.meta["batch_size"] = std::to_string(cfg.options.batch_size);
    if (cfg.mode == Mode::supervised) {
        ck.meta["learning_rate"] = detail::shortest_decimal(fc.scratch_lr);
    } else {
        ck.meta["omega"] = detail::shortest_decimal(fc.lexopt.omega);
    }
    ck.meta["p_uncond"] = detail::shortest_decimal(fc.lexopt.p_uncond);
    if (cfg.mode == Mode::text2data) {
        ck.meta["xi_hat"] = detail::shortest_decimal(fc.lexopt.xi_hat);
        ck.meta["rho"] = detail::shortest_decimal(fc.lexopt.rho);
        ck.meta["gamma"] = detail::shortest_decimal(fc.lexopt.gamma);
        ck.meta["alpha"] = detail::shortest_decimal(fc.lexopt.alpha);
        ck.meta["beta"] = detail::shortest_decimal(fc.lexopt.beta);
    }
    if (result.failure) ck.meta["failure"] = *result.failure;
    save_checkpoint(cfg.out, ck);

    const fs::path trace_path = cfg.trace_out ? *cfg.trace_out : fs::path(cfg.out.string() + ".trace.csv");
    detail::write_file(trace_path, cfg.mode == Mode::text2data ? trace_csv(result.trace) : losses_csv(result.losses));
    if (result.failure) throw NumericalError("finetune stopped early (" + *result.failure + "); last good parameters saved");
    return {std::move(ck), std::move(result)};
}

struct SampleConfig {
    fs::path ckpt;
    std::string text;
    double w = 0.0;
    std::size_t n = 1;
    std::uint64_t seed = 0;
    std::optional<fs::path> bins_from; // dataset dir whose bins encode the text
};

/// Returns generated series, one per row, for `text` (empty text = NULL).
inline std::vector<std::vector<double>> run_sample(const SampleConfig& cfg) {
    if (cfg.n == 0) throw ConfigError("sample: --n must be positive");
    if (cfg.w < 0.0) throw ConfigError("sample: --w must be nonnegative");
    const auto ck = load_checkpoint(cfg.ckpt);
    ConditionVector cond = encode_null(EncoderOptions{});
    if (!cfg.text.empty()) {
        if (!cfg.bins_from) throw ConfigError("sample: --data is required to encode text against corpus bins");
        const auto test = load_split(*cfg.bins_from, "test", true);
        std::vector<std::string> warnings;
        cond = encode(parse_text(cfg.text), test.manifest.bins, EncoderOptions{}, &warnings);
        for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    }
    if (cond.dim() != ck.net.arch().cond_dim) throw DataError("sample: condition size does not match checkpoint");
    Rng rng = make_rng(cfg.seed, "sample");
    std::vector<ConditionVector> conds(cfg.n, cond);
    const auto x = sample_batch(ck.net, ck.schedule, conds, cfg.w, rng);
    std::vector<std::vector<double>> out;
    for (std::size_t r = 0; r < cfg.n; ++r) {
        auto row = x.row(r);
        out.emplace_back(row.begin(), row.end());
    }
    return out;
}

inline std::string series_csv(const std::vector<std::vector<double>>& rows) {
    std::string out;
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + detail::shortest_decimal(r[i]);
        out += "\n";
    }
    return out;
}

struct EvaluateConfig {
    fs::path ckpt;
    fs::path data;
    double w = 0.0;
    EvalOptions options;
    std::optional<fs::path> out;
};

inline EvalReport run_evaluate(const EvaluateConfig& cfg) {
    if (cfg.w < 0.0) throw ConfigError("evaluate: --w must be nonnegative");
    const auto ck = load_checkpoint(cfg.ckpt);
    const Dataset test = load_split(cfg.data, "test");
    EvalReport report = evaluate_controllability(diffusion_generator(ck.net, ck.schedule, cfg.w), test, cfg.options);
    report.guidance = cfg.w;
    report.mode = ck.meta.count("mode") ? ck.meta.at("mode") : ck.stage;
    if (auto it = ck.meta.find("label_fraction"); it != ck.meta.end()) {
        report.label_fraction = detail::parse_double(it->second, "label_fraction");
    }
    if (cfg.out) save_report(*cfg.out, report);
    return report;
}

struct ExportConfig {
    std::vector<fs::path> reports;
    std::vector<fs::path> traces;
    fs::path out;
};

inline ExportedFiles run_export(const ExportConfig& cfg) {
    if (cfg.reports.empty()) throw ConfigError("export: at least one --in report is required");
    std::vector<EvalReport> reports;
    for (const auto& p : cfg.reports) reports.push_back(load_report(p));
    ExportedFiles files = export_plot_data(reports, {}, cfg.out);
    for (std::size_t i = 0; i < cfg.traces.size(); ++i) {
        files.traces.push_back(cfg.out / ("trace_" + std::to_string(i) + ".csv"));
        fs::copy_file(cfg.traces[i], files.traces.back(), fs::copy_options::overwrite_existing);
    }
    return files;
}

} // namespace text2data
