// text2data command-line front end.
//
// Every subcommand accepts --config FILE with flat `key = value` lines named
// after its long flags; flags given on the command line win.
// Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numerical failure.

#include <cstdio>
#include <cstddef>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "text2data/pipeline.hpp"

namespace t2d = text2data;

namespace {

constexpr int exit_config = 2;
constexpr int exit_data = 3;
constexpr int exit_numerical = 4;

CLI::App* subcommand(CLI::App& app, const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", "flat key = value file mirroring the flags (flags win)");
    return sub;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Splices `--key value` pairs from a --config file in front of the
// command-line flags; single-valued options keep the last occurrence.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    std::optional<std::string> file;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            file = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            break;
        }
        if (args[i].starts_with("--config=")) {
            file = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (!file) return args;
    if (args.size() < 2) throw t2d::ConfigError("--config must follow a subcommand");
    std::ifstream in(*file);
    if (!in) throw t2d::ConfigError("cannot open config file '" + *file + "'");
    std::vector<std::string> extra;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw t2d::ConfigError(*file + ":" + std::to_string(lineno) + ": expected key = value");
        }
        const auto key = trim(line.substr(0, eq));
        auto value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        if (key.empty() || key == "config") throw t2d::ConfigError(*file + ":" + std::to_string(lineno) + ": bad key");
        extra.push_back("--" + key);
        extra.push_back(value);
    }
    // After the subcommand name, so command-line flags come later and win.
    args.insert(args.begin() + 2, extra.begin(), extra.end());
    return args;
}

void write_or_print(const std::optional<std::string>& path, const std::string& text) {
    if (path) {
        t2d::detail::write_file(*path, text);
    } else {
        std::cout << text;
    }
}

std::vector<std::size_t> parse_widths(const std::string& s) {
    std::vector<std::size_t> out;
    for (const auto& part : t2d::detail::split(s, ',')) {
        try {
            out.push_back(static_cast<std::size_t>(t2d::detail::parse_u64(trim(part), "hidden")));
        } catch (const t2d::DataError& e) {
            throw t2d::ConfigError(e.what());
        }
        if (out.back() == 0) throw t2d::ConfigError("hidden widths must be positive");
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Text2Data: text-conditioned diffusion for 1-D time series"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    t2d::GenDataConfig gen;
    std::string gen_out;
    auto* gen_cmd = subcommand(app, "gen-data", "generate the synthetic corpus and its 80/20 split");
    gen_cmd->add_option("--n", gen.n, "corpus size")->capture_default_str();
    gen_cmd->add_option("--length", gen.length, "series length")->capture_default_str();
    gen_cmd->add_option("--label-frac", gen.label_fraction, "fraction of training series with text")->capture_default_str();
    gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
    gen_cmd->add_option("--out", gen_out, "output directory")->required();

    t2d::PretrainConfig pre;
    std::string pre_data, pre_out;
    auto* pre_cmd = subcommand(app, "pretrain", "stage 1: unconditional training on every training series");
    pre_cmd->add_option("--data", pre_data, "dataset directory")->required();
    pre_cmd->add_option("--epochs", pre.options.epochs)->capture_default_str();
    pre_cmd->add_option("--batch", pre.options.batch_size)->capture_default_str();
    pre_cmd->add_option("--lr", pre.options.learning_rate)->capture_default_str();
    std::string pre_hidden = "128,128,128";
    pre_cmd->add_option("--hidden", pre_hidden, "comma-separated hidden widths")->capture_default_str();
    pre_cmd->add_option("--seed", pre.seed)->capture_default_str();
    pre_cmd->add_option("--out", pre_out, "checkpoint path")->required();

    t2d::FinetuneFileConfig ft;
    std::string ft_mode = "text2data", ft_data, ft_out;
    std::optional<std::string> ft_init, ft_trace;
    std::optional<double> ft_xi;
    auto* ft_cmd = subcommand(app, "finetune", "stage 2: text2data, unconstrained or supervised finetuning");
    ft_cmd->add_option("--mode", ft_mode)->capture_default_str()->check(
        CLI::IsMember({"text2data", "unconstrained", "supervised"}));
    ft_cmd->add_option("--data", ft_data, "dataset directory")->required();
    ft_cmd->add_option("--init", ft_init, "stage-1 checkpoint");
    ft_cmd->add_option("--xi", ft_xi, "raw anchor (default: the init checkpoint's final L1)");
    ft_cmd->add_option("--rho", ft.lexopt.rho)->capture_default_str();
    ft_cmd->add_option("--alpha", ft.lexopt.alpha)->capture_default_str();
    ft_cmd->add_option("--beta", ft.lexopt.beta)->capture_default_str();
    ft_cmd->add_option("--gamma", ft.lexopt.gamma)->capture_default_str();
    ft_cmd->add_option("--omega", ft.lexopt.omega)->capture_default_str();
    ft_cmd->add_option("--p-uncond", ft.lexopt.p_uncond)->capture_default_str();
    ft_cmd->add_option("--scratch-lr", ft.scratch_lr, "step size (supervised mode)")->capture_default_str();
    ft_cmd->add_option("--epochs", ft.options.epochs)->capture_default_str();
    ft_cmd->add_option("--batch", ft.options.batch_size)->capture_default_str();
    std::string ft_hidden = "128,128,128";
    ft_cmd->add_option("--hidden", ft_hidden, "comma-separated hidden widths (supervised mode)")->capture_default_str();
    ft_cmd->add_option("--seed", ft.seed)->capture_default_str();
    ft_cmd->add_option("--out", ft_out, "checkpoint path")->required();
    ft_cmd->add_option("--trace", ft_trace, "trace CSV path (default: <out>.trace.csv)");

    t2d::SampleConfig smp;
    std::string smp_ckpt;
    std::optional<std::string> smp_data, smp_out;
    auto* smp_cmd = subcommand(app, "sample", "generate series for a text prompt");
    smp_cmd->add_option("--ckpt", smp_ckpt)->required();
    smp_cmd->add_option("--text", smp.text, "prompt; omit for unconditional samples");
    smp_cmd->add_option("--data", smp_data, "dataset directory providing the encoder bins");
    smp_cmd->add_option("--w", smp.w, "guidance weight")->capture_default_str();
    smp_cmd->add_option("--n", smp.n)->capture_default_str();
    smp_cmd->add_option("--seed", smp.seed)->capture_default_str();
    smp_cmd->add_option("--out", smp_out, "CSV path (default: stdout)");

    t2d::EvaluateConfig ev;
    std::string ev_ckpt, ev_data;
    std::optional<std::string> ev_out;
    auto* ev_cmd = subcommand(app, "evaluate", "controllability MAE on the test split");
    ev_cmd->add_option("--ckpt", ev_ckpt)->required();
    ev_cmd->add_option("--data", ev_data)->required();
    ev_cmd->add_option("--w", ev.w, "guidance weight")->capture_default_str();
    ev_cmd->add_option("--n-per-prompt", ev.options.n_per_prompt)->capture_default_str();
    ev_cmd->add_option("--max-prompts", ev.options.max_prompts, "0 = all")->capture_default_str();
    ev_cmd->add_option("--workers", ev.options.workers, "0 = hardware concurrency")->capture_default_str();
    ev_cmd->add_option("--seed", ev.options.seed)->capture_default_str();
    ev_cmd->add_option("--out", ev_out, "report JSON path (default: stdout)");

    t2d::BoundsInput bin;
    double bin_xi = 0.0;
    std::optional<std::string> bin_out;
    auto* b_cmd = subcommand(app, "bounds", "generalization-bound report (JSON)");
    b_cmd->add_option("--sigma2", bin.sigma2)->capture_default_str();
    b_cmd->add_option("--delta", bin.delta)->capture_default_str();
    b_cmd->add_option("--n", bin.n, "unlabeled count N")->capture_default_str();
    b_cmd->add_option("--np", bin.np, "labeled count N_p")->capture_default_str();
    b_cmd->add_option("--theta-card", bin.theta_card, "effective hypothesis-set size")->capture_default_str();
    b_cmd->add_option("--xi", bin_xi, "constraint level")->capture_default_str();
    b_cmd->add_option("--out", bin_out);

    t2d::ExportConfig ex;
    std::vector<std::string> ex_in, ex_traces;
    std::string ex_out;
    auto* ex_cmd = subcommand(app, "export", "plot-data CSVs from evaluation reports");
    ex_cmd->add_option("--in", ex_in, "report JSON files")->required();
    ex_cmd->add_option("--trace", ex_traces, "trace CSV files to copy alongside");
    ex_cmd->add_option("--out", ex_out, "output directory")->required();

    std::vector<std::string> args;
    try {
        args = expand_config(argc, argv);
    } catch (const t2d::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    }
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_config;
    }

    try {
        if (*gen_cmd) {
            gen.out = gen_out;
            const auto data = t2d::run_gen_data(gen);
            std::cout << "wrote " << data.train.size() << " train (" << data.train.labeled_count() << " labeled) and "
                      << data.test.size() << " test series to " << gen_out << "\n";
        } else if (*pre_cmd) {
            pre.data = pre_data;
            pre.out = pre_out;
            pre.hidden = parse_widths(pre_hidden);
            const auto ck = t2d::run_pretrain_files(pre);
            std::cout << "pretrain: initial L1 " << ck.meta.at("initial_l1") << ", final L1 " << ck.meta.at("final_l1")
                      << "\n";
        } else if (*ft_cmd) {
            ft.mode = t2d::mode_from_string(ft_mode);
            ft.data = ft_data;
            ft.out = ft_out;
            ft.hidden = parse_widths(ft_hidden);
            if (ft_init) ft.init = *ft_init;
            if (ft_trace) ft.trace_out = *ft_trace;
            ft.xi = ft_xi;
            const auto r = t2d::run_finetune_files(ft);
            std::cout << "finetune (" << ft_mode << "): " << r.result.touches << " labeled series touched\n";
        } else if (*smp_cmd) {
            smp.ckpt = smp_ckpt;
            if (smp_data) smp.bins_from = *smp_data;
            write_or_print(smp_out, t2d::series_csv(t2d::run_sample(smp)));
        } else if (*ev_cmd) {
            ev.ckpt = ev_ckpt;
            ev.data = ev_data;
            const auto report = t2d::run_evaluate(ev);
            if (!ev_out) std::cout << t2d::report_to_json(report).dump(2) << "\n";
            else t2d::save_report(*ev_out, report);
        } else if (*b_cmd) {
            const auto report = [&] {
                try {
                    return t2d::theorem1_report(bin, bin_xi);
                } catch (const t2d::InvalidArgument& e) {
                    throw t2d::ConfigError(e.what());
                }
            }();
            write_or_print(bin_out, t2d::bounds_to_json(bin, report).dump(2) + "\n");
        } else if (*ex_cmd) {
            for (const auto& p : ex_in) ex.reports.push_back(p);
            for (const auto& p : ex_traces) ex.traces.push_back(p);
            ex.out = ex_out;
            const auto files = t2d::run_export(ex);
            std::cout << "wrote " << files.mae.string() << " and " << files.pairs.string() << "\n";
        }
    } catch (const t2d::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const t2d::InvalidArgument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const t2d::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return exit_numerical;
    } catch (const t2d::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return exit_data;
    } catch (const t2d::ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return exit_data;
    } catch (const t2d::FeasibilityError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return exit_data;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return exit_data;
    }
    return 0;
}
