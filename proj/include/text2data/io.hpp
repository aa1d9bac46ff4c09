#pragma once

// On-disk formats: checkpoints, datasets, evaluation reports, traces and
// plot-data CSVs. Checkpoints and CSVs write numbers in shortest round-trip
// form, so a reload reproduces every double exactly.

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "text2data/bounds.hpp"
#include "text2data/condition.hpp"
#include "text2data/errors.hpp"
#include "text2data/features.hpp"
#include "text2data/harness.hpp"
#include "text2data/lexopt.hpp"
#include "text2data/network.hpp"
#include "text2data/schedule.hpp"
#include "text2data/synthdata.hpp"

namespace text2data {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace detail {

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& path, const std::string& contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << contents;
    if (!out) throw DataError("write failed for '" + path.string() + "'");
}

inline double parse_double(std::string_view s, std::string_view what) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || s.empty()) {
        throw DataError("bad number for " + std::string(what) + ": '" + std::string(s) + "'");
    }
    return v;
}

inline std::uint64_t parse_u64(std::string_view s, std::string_view what) {
    std::uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || s.empty()) {
        throw DataError("bad integer for " + std::string(what) + ": '" + std::string(s) + "'");
    }
    return v;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr std::string_view checkpoint_magic = "text2data-checkpoint";
inline constexpr int checkpoint_version = 1;

struct Checkpoint {
    ScoreNetwork net;
    NoiseSchedule schedule;
    std::string stage; // "init", "pretrain", "finetune"
    std::uint64_t seed = 0;
    /// Free-form extras (final_l1, mode, xi_hat, ...), written sorted by key.
    std::map<std::string, std::string> meta;
};

inline std::string serialize_checkpoint(const Checkpoint& ck) {
    const auto& a = ck.net.arch();
    std::string out;
    out += std::string(checkpoint_magic) + " " + std::to_string(checkpoint_version) + "\n";
    std::string hidden;
    for (std::size_t i = 0; i < a.hidden.size(); ++i) hidden += (i ? "," : "") + std::to_string(a.hidden[i]);
    out += "series_length=" + std::to_string(a.series_length) + "\n";
    out += "hidden=" + hidden + "\n";
    out += "activation=" + to_string(a.activation) + "\n";
    out += "cond_dim=" + std::to_string(a.cond_dim) + "\n";
    out += "time_dim=" + std::to_string(a.time_dim) + "\n";
    out += "schedule.steps=" + std::to_string(ck.schedule.steps()) + "\n";
    out += "schedule.beta_start=" + detail::shortest_decimal(ck.schedule.beta_start()) + "\n";
    out += "schedule.beta_end=" + detail::shortest_decimal(ck.schedule.beta_end()) + "\n";
    out += "stage=" + ck.stage + "\n";
    out += "seed=" + std::to_string(ck.seed) + "\n";
    for (const auto& [k, v] : ck.meta) {
        if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
            throw InvalidArgument("checkpoint meta key/value may not contain '=' or newlines: " + k);
        }
        out += "meta." + k + "=" + v + "\n";
    }
    out += "tensors=" + std::to_string(ck.net.params().count()) + "\n";
    out += "end-header\n";
    for (const auto& e : ck.net.params()) {
        out += "tensor " + e.name;
        for (auto d : e.value.shape()) out += " " + std::to_string(d);
        out += "\n";
        const auto vals = e.value.values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            if (i) out += ' ';
            out += detail::shortest_decimal(vals[i]);
        }
        out += "\n";
    }
    return out;
}

inline Checkpoint parse_checkpoint(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != std::string(checkpoint_magic) + " " + std::to_string(checkpoint_version)) {
        throw DataError("checkpoint: bad magic line '" + line + "'");
    }
    std::map<std::string, std::string> header;
    bool ended = false;
    while (std::getline(in, line)) {
        if (line == "end-header") {
            ended = true;
            break;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("checkpoint: bad header line '" + line + "'");
        header[line.substr(0, eq)] = line.substr(eq + 1);
    }
    if (!ended) throw DataError("checkpoint: truncated header");
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = header.find(key);
        if (it == header.end()) throw DataError("checkpoint: missing header key '" + key + "'");
        return it->second;
    };

    Architecture arch;
    arch.series_length = detail::parse_u64(need("series_length"), "series_length");
    arch.hidden.clear();
    if (!need("hidden").empty()) {
        for (const auto& h : detail::split(need("hidden"), ',')) arch.hidden.push_back(detail::parse_u64(h, "hidden"));
    }
    try {
        arch.activation = activation_from_string(need("activation"));
    } catch (const InvalidArgument& e) {
        throw DataError(std::string("checkpoint: ") + e.what());
    }
    arch.cond_dim = detail::parse_u64(need("cond_dim"), "cond_dim");
    arch.time_dim = detail::parse_u64(need("time_dim"), "time_dim");

    Checkpoint ck;
    try {
        ck.schedule = NoiseSchedule::linear(detail::parse_u64(need("schedule.steps"), "schedule.steps"),
                                            detail::parse_double(need("schedule.beta_start"), "beta_start"),
                                            detail::parse_double(need("schedule.beta_end"), "beta_end"));
    } catch (const InvalidArgument& e) {
        throw DataError(std::string("checkpoint: ") + e.what());
    }
    ck.stage = need("stage");
    ck.seed = detail::parse_u64(need("seed"), "seed");
    for (const auto& [k, v] : header) {
        if (k.starts_with("meta.")) ck.meta[k.substr(5)] = v;
    }
    const auto n_tensors = detail::parse_u64(need("tensors"), "tensors");

    ParamSet params;
    for (std::uint64_t t = 0; t < n_tensors; ++t) {
        if (!std::getline(in, line)) throw DataError("checkpoint: truncated tensor section");
        auto parts = detail::split(line, ' ');
        if (parts.size() < 3 || parts[0] != "tensor") throw DataError("checkpoint: bad tensor line '" + line + "'");
        Shape shape;
        for (std::size_t i = 2; i < parts.size(); ++i) shape.push_back(detail::parse_u64(parts[i], "tensor dim"));
        if (!std::getline(in, line)) throw DataError("checkpoint: missing values for " + parts[1]);
        std::vector<double> vals;
        vals.reserve(shape_size(shape));
        for (const auto& v : detail::split(line, ' ')) vals.push_back(detail::parse_double(v, parts[1]));
        if (vals.size() != shape_size(shape)) throw DataError("checkpoint: wrong value count for " + parts[1]);
        try {
            params.add(parts[1], Tensor(shape, std::move(vals)));
        } catch (const NumericalError& e) {
            throw DataError("checkpoint: tensor " + parts[1] + ": " + e.what());
        }
    }
    try {
        ck.net = ScoreNetwork(arch, std::move(params));
    } catch (const InvalidArgument& e) {
        throw DataError(std::string("checkpoint: ") + e.what());
    }
    return ck;
}

inline void save_checkpoint(const fs::path& path, const Checkpoint& ck) {
    detail::write_file(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const fs::path& path) { return parse_checkpoint(detail::read_file(path)); }

// ---------------------------------------------------------------------------
// Datasets: <dir>/manifest.json, <dir>/train.jsonl, <dir>/test.jsonl

inline json features_to_json(const FeatureVector& f) {
    json j;
    for (auto feat : all_features) {
        if (feat == Feature::n_peaks) {
            j[std::string(feature_name(feat))] = f.n_peaks;
        } else {
            j[std::string(feature_name(feat))] = f.get(feat);
        }
    }
    return j;
}

inline FeatureVector features_from_json(const json& j) {
    FeatureVector f;
    for (auto feat : all_features) {
        const auto key = std::string(feature_name(feat));
        if (!j.contains(key) || !j[key].is_number()) throw DataError("features: missing '" + key + "'");
        if (feat == Feature::n_peaks) {
            f.n_peaks = j[key].get<long>();
        } else {
            f.set(feat, j[key].get<double>());
        }
    }
    return f;
}

inline json bins_to_json(const QuintileBins& bins) {
    json j;
    for (auto f : all_features) {
        const auto& b = bins[f];
        j[std::string(feature_name(f))] = {{"min", b.min}, {"max", b.max}, {"edges", b.edges}};
    }
    return j;
}

inline QuintileBins bins_from_json(const json& j) {
    QuintileBins bins;
    for (auto f : all_features) {
        const auto key = std::string(feature_name(f));
        if (!j.contains(key)) throw DataError("manifest: bins missing '" + key + "'");
        const auto& b = j[key];
        bins[f].min = b.at("min").get<double>();
        bins[f].max = b.at("max").get<double>();
        bins[f].edges = b.at("edges").get<std::array<double, 4>>();
    }
    return bins;
}

inline json record_to_json(const SeriesRecord& r) {
    json j;
    j["id"] = r.id;
    j["values"] = r.values;
    if (r.features) j["features"] = features_to_json(*r.features);
    if (r.text) j["text"] = *r.text;
    return j;
}

inline SeriesRecord record_from_json(const json& j) {
    SeriesRecord r;
    if (!j.is_object() || !j.contains("values") || !j["values"].is_array()) {
        throw DataError("dataset record without a 'values' array");
    }
    r.id = j.value("id", std::size_t{0});
    r.values = j["values"].get<std::vector<double>>();
    if (j.contains("features")) r.features = features_from_json(j["features"]);
    if (j.contains("text")) r.text = j["text"].get<std::string>();
    return r;
}

inline json manifest_to_json(const DatasetManifest& train, const DatasetManifest& test) {
    json j;
    j["length"] = train.length;
    j["seed"] = train.seed;
    j["label_fraction"] = train.label_fraction;
    j["train_ratio"] = train.train_ratio;
    j["corpus_size"] = train.corpus_size;
    j["bins"] = bins_to_json(train.bins);
    j["splits"]["train"]["labeled"] = train.labeled;
    j["splits"]["test"]["labeled"] = test.labeled;
    return j;
}

inline DatasetManifest manifest_from_json(const json& j, const std::string& split) {
    DatasetManifest m;
    try {
        m.split = split;
        m.length = j.at("length").get<std::size_t>();
        m.seed = j.value("seed", std::uint64_t{0});
        m.label_fraction = j.value("label_fraction", 0.0);
        m.train_ratio = j.value("train_ratio", 0.8);
        m.corpus_size = j.value("corpus_size", std::size_t{0});
        m.bins = bins_from_json(j.at("bins"));
        m.labeled = j.at("splits").at(split).at("labeled").get<std::vector<std::size_t>>();
    } catch (const json::exception& e) {
        throw DataError("manifest: " + std::string(e.what()));
    }
    return m;
}

inline void save_dataset(const fs::path& dir, const DatasetPair& data) {
    fs::create_directories(dir);
    detail::write_file(dir / "manifest.json", manifest_to_json(data.train.manifest, data.test.manifest).dump(2) + "\n");
    for (const auto* d : {&data.train, &data.test}) {
        std::string lines;
        for (const auto& r : d->series) lines += record_to_json(r).dump() + "\n";
        detail::write_file(dir / (d->manifest.split + ".jsonl"), lines);
    }
}

/// Reads one split. With `labeled_only`, lines at unlabeled positions are
/// skipped without parsing and the manifest's positions are renumbered.
inline Dataset load_split(const fs::path& dir, const std::string& split, bool labeled_only = false) {
    if (split != "train" && split != "test") throw InvalidArgument("load_split: split must be train or test");
    json manifest;
    try {
        manifest = json::parse(detail::read_file(dir / "manifest.json"));
    } catch (const json::parse_error& e) {
        throw DataError("manifest.json: " + std::string(e.what()));
    }
    Dataset d;
    d.manifest = manifest_from_json(manifest, split);
    const std::set<std::size_t> wanted(d.manifest.labeled.begin(), d.manifest.labeled.end());

    std::istringstream in(detail::read_file(dir / (split + ".jsonl")));
    std::string line;
    std::size_t pos = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (!labeled_only || wanted.count(pos)) {
            try {
                d.series.push_back(record_from_json(json::parse(line)));
            } catch (const json::exception& e) {
                throw DataError(split + ".jsonl line " + std::to_string(pos + 1) + ": " + e.what());
            }
        }
        ++pos;
    }
    if (labeled_only) {
        for (std::size_t i = 0; i < d.manifest.labeled.size(); ++i) d.manifest.labeled[i] = i;
        if (!wanted.empty() && *wanted.rbegin() >= pos) throw DataError("dataset: labeled index out of range");
    }
    d.validate();
    return d;
}

inline DatasetPair load_dataset(const fs::path& dir) { return {load_split(dir, "train"), load_split(dir, "test")}; }

// ---------------------------------------------------------------------------
// Reports

inline json report_to_json(const EvalReport& r) {
    json j;
    j["mode"] = r.mode;
    j["label_fraction"] = r.label_fraction;
    j["seed"] = r.seed;
    j["guidance"] = r.guidance;
    j["n_prompts"] = r.n_prompts;
    j["n_per_prompt"] = r.n_per_prompt;
    for (auto f : all_features) {
        const auto k = static_cast<std::size_t>(f);
        const auto name = std::string(feature_name(f));
        j["mae"][name] = r.mae[k];
        j["null_mae"][name] = r.null_mae[k];
        j["baseline_spread"][name] = r.baseline_spread[k];
    }
    json pairs = json::array();
    for (const auto& p : r.pairs) pairs.push_back({{"prompt", p.prompt}, {"ground_truth", p.ground_truth}, {"generated", p.generated}});
    j["pairs"] = std::move(pairs);
    return j;
}

inline EvalReport report_from_json(const json& j) {
    EvalReport r;
    try {
        r.mode = j.at("mode").get<std::string>();
        r.label_fraction = j.at("label_fraction").get<double>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.guidance = j.at("guidance").get<double>();
        r.n_prompts = j.at("n_prompts").get<std::size_t>();
        r.n_per_prompt = j.at("n_per_prompt").get<std::size_t>();
        for (auto f : all_features) {
            const auto k = static_cast<std::size_t>(f);
            const auto name = std::string(feature_name(f));
            r.mae[k] = j.at("mae").at(name).get<double>();
            r.null_mae[k] = j.at("null_mae").at(name).get<double>();
            r.baseline_spread[k] = j.at("baseline_spread").at(name).get<double>();
        }
        for (const auto& p : j.at("pairs")) {
            r.pairs.push_back({p.at("prompt").get<std::size_t>(), p.at("ground_truth").get<std::vector<double>>(),
                               p.at("generated").get<std::vector<double>>()});
        }
    } catch (const json::exception& e) {
        throw DataError("report: " + std::string(e.what()));
    }
    return r;
}

inline void save_report(const fs::path& path, const EvalReport& r) { detail::write_file(path, report_to_json(r).dump(2) + "\n"); }

inline EvalReport load_report(const fs::path& path) {
    try {
        return report_from_json(json::parse(detail::read_file(path)));
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

inline json bounds_to_json(const BoundsInput& in, const BoundsReport& r) {
    json j;
    j["input"] = {{"sigma2", in.sigma2}, {"sigma2_tilde", in.sigma2_tilde()}, {"delta", in.delta}, {"n", in.n},
                  {"np", in.np},         {"theta_card", in.theta_card}, {"C", bound_constant}};
    j["assumption"] = "theta_card is a user-supplied effective cardinality of a finite hypothesis set";
    j["eps_n"] = r.eps_n;
    j["eps_np"] = r.eps_np;
    j["eps"] = r.eps;
    j["xi"] = r.xi;
    j["guarantee_l2_slack"] = r.guarantee_l2_slack;
    j["guarantee_l1p_slack"] = r.guarantee_l1p_slack;
    j["l1p_ceiling"] = r.l1p_ceiling;
    return j;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string trace_csv(const std::vector<StepTrace>& trace) {
    std::string out = "step,l2,l1p,phi,lambda,grad_norm_l2,grad_norm_l1p,constraint_ok\n";
    for (const auto& t : trace) {
        out += std::to_string(t.step) + "," + detail::shortest_decimal(t.l2) + "," + detail::shortest_decimal(t.l1p) + "," +
               detail::shortest_decimal(t.phi) + "," + detail::shortest_decimal(t.lambda) + "," +
               detail::shortest_decimal(t.grad_norm_l2) + "," + detail::shortest_decimal(t.grad_norm_l1p) + "," +
               (t.constraint_ok ? "1" : "0") + "\n";
    }
    return out;
}

inline std::string losses_csv(const std::vector<double>& losses) {
    std::string out = "step,l2\n";
    for (std::size_t i = 0; i < losses.size(); ++i) out += std::to_string(i) + "," + detail::shortest_decimal(losses[i]) + "\n";
    return out;
}

struct MaeRow {
    double label_fraction = 0.0;
    std::string mode;
    std::string feature;
    double mae = 0.0;
    std::uint64_t seed = 0;

    bool operator==(const MaeRow&) const = default;
};

/// One row per (report, feature), sorted by (label_fraction, mode, feature, seed).
inline std::vector<MaeRow> mae_rows(const std::vector<EvalReport>& reports) {
    if (reports.empty()) throw InvalidArgument("export: no reports");
    std::vector<MaeRow> rows;
    for (const auto& r : reports) {
        for (auto f : all_features) {
            rows.push_back({r.label_fraction, r.mode, std::string(feature_name(f)), r.mae[static_cast<std::size_t>(f)], r.seed});
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const MaeRow& a, const MaeRow& b) {
        if (a.label_fraction != b.label_fraction) return a.label_fraction < b.label_fraction;
        if (a.mode != b.mode) return a.mode < b.mode;
        if (a.feature != b.feature) return a.feature < b.feature;
        return a.seed < b.seed;
    });
    return rows;
}

inline std::string mae_csv(const std::vector<MaeRow>& rows) {
    std::string out = "label_fraction,mode,feature,mae,seed\n";
    for (const auto& r : rows) {
        out += detail::shortest_decimal(r.label_fraction) + "," + r.mode + "," + r.feature + "," +
               detail::shortest_decimal(r.mae) + "," + std::to_string(r.seed) + "\n";
    }
    return out;
}

inline std::vector<MaeRow> parse_mae_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "label_fraction,mode,feature,mae,seed") throw DataError("mae csv: bad header");
    std::vector<MaeRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto c = detail::split(line, ',');
        if (c.size() != 5) throw DataError("mae csv: bad row '" + line + "'");
        rows.push_back({detail::parse_double(c[0], "label_fraction"), c[1], c[2], detail::parse_double(c[3], "mae"),
                        detail::parse_u64(c[4], "seed")});
    }
    return rows;
}

/// Long format: one row per (report, prompt, kind, position).
inline std::string pairs_csv(const std::vector<EvalReport>& reports) {
    std::string out = "mode,label_fraction,seed,prompt,kind,position,value\n";
    for (const auto& r : reports) {
        const auto prefix = r.mode + "," + detail::shortest_decimal(r.label_fraction) + "," + std::to_string(r.seed) + ",";
        for (const auto& p : r.pairs) {
            for (const auto* kind : {"ground_truth", "generated"}) {
                const auto& v = std::string_view(kind) == "generated" ? p.generated : p.ground_truth;
                for (std::size_t i = 0; i < v.size(); ++i) {
                    out += prefix + std::to_string(p.prompt) + "," + kind + "," + std::to_string(i) + "," +
                           detail::shortest_decimal(v[i]) + "\n";
                }
            }
        }
    }
    return out;
}

struct ExportedFiles {
    fs::path mae;
    fs::path pairs;
    std::vector<fs::path> traces;
};

/// Writes mae.csv, pairs.csv and trace_<i>.csv into `out`.
inline ExportedFiles export_plot_data(const std::vector<EvalReport>& reports, const std::vector<std::vector<StepTrace>>& traces,
                                      const fs::path& out) {
    const auto rows = mae_rows(reports);
    fs::create_directories(out);
    ExportedFiles files{out / "mae.csv", out / "pairs.csv", {}};
    detail::write_file(files.mae, mae_csv(rows));
    detail::write_file(files.pairs, pairs_csv(reports));
    for (std::size_t i = 0; i < traces.size(); ++i) {
        files.traces.push_back(out / ("trace_" + std::to_string(i) + ".csv"));
        detail::write_file(files.traces.back(), trace_csv(traces[i]));
    }
    return files;
}

inline std::vector<MaeRow> load_mae_csv(const fs::path& path) { return parse_mae_csv(detail::read_file(path)); }

} // namespace text2data
