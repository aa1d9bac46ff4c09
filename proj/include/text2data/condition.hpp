#pragma once

// Deterministic stand-in for a learned text encoder: renders feature prompts
// from two fixed templates, parses them back, and embeds the result.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "text2data/condition_vector.hpp"
#include "text2data/errors.hpp"
#include "text2data/features.hpp"
#include "text2data/rng.hpp"

namespace text2data {

enum class Level { very_low = 0, low, medium, high, very_high };

inline constexpr std::array<std::string_view, 5> level_names{"very low", "low", "medium", "high", "very high"};

inline std::string_view to_string(Level l) { return level_names[static_cast<std::size_t>(l)]; }

/// Corpus range and quintile edges of one feature. Bin j covers
/// [edge_{j-1}, edge_j) with edge_{-1} = min and the last bin closed at max.
struct QuintileBin {
    double min = 0.0;
    double max = 0.0;
    std::array<double, 4> edges{};

    Level level_of(double v) const {
        std::size_t count = 0;
        for (double e : edges) count += v >= e ? 1 : 0;
        return static_cast<Level>(count);
    }

    double lower(Level l) const {
        const auto i = static_cast<std::size_t>(l);
        return i == 0 ? min : edges[i - 1];
    }

    double upper(Level l) const {
        const auto i = static_cast<std::size_t>(l);
        return i == 4 ? max : edges[i];
    }

    double midpoint(Level l) const { return 0.5 * (lower(l) + upper(l)); }

    bool operator==(const QuintileBin&) const = default;
};

struct QuintileBins {
    std::array<QuintileBin, feature_count> features{};

    const QuintileBin& operator[](Feature f) const { return features[static_cast<std::size_t>(f)]; }
    QuintileBin& operator[](Feature f) { return features[static_cast<std::size_t>(f)]; }

    bool operator==(const QuintileBins&) const = default;
};

/// Edges at the order statistics sorted[⌊j·n/5⌋], j = 1..4.
inline QuintileBins compute_bins(std::span<const FeatureVector> corpus) {
    if (corpus.empty()) throw InvalidArgument("compute_bins: empty corpus");
    QuintileBins bins;
    const auto n = corpus.size();
    std::vector<double> vals(n);
    for (auto f : all_features) {
        for (std::size_t i = 0; i < n; ++i) vals[i] = corpus[i].get(f);
        std::sort(vals.begin(), vals.end());
        auto& b = bins[f];
        b.min = vals.front();
        b.max = vals.back();
        for (std::size_t j = 1; j <= 4; ++j) b.edges[j - 1] = vals[std::min(n - 1, j * n / 5)];
    }
    return bins;
}

enum class TextKind { exact, general };

namespace detail {

inline std::string shortest_decimal(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string exact_clause(Feature f, const FeatureVector& fv) {
    switch (f) {
    case Feature::frequency: return "the frequency of " + shortest_decimal(fv.frequency);
    case Feature::skewness: return "the skewness of " + shortest_decimal(fv.skewness);
    case Feature::mean: return "the mean of " + shortest_decimal(fv.mean);
    case Feature::variance: return "the variance of " + shortest_decimal(fv.variance);
    case Feature::linearity: return "the linear trend of " + shortest_decimal(fv.linearity);
    case Feature::n_peaks: return std::to_string(fv.n_peaks) + (fv.n_peaks == 1 ? " peak" : " peaks");
    }
    return {};
}

inline constexpr std::array<std::string_view, feature_count> general_nouns{
    "frequency", "skewness", "average", "variance", "linearity", "number of peaks"};

inline constexpr std::string_view text_prefix = "A time series with ";

inline std::string join_clauses(const std::vector<std::string>& clauses) {
    std::string out(text_prefix);
    for (std::size_t i = 0; i < clauses.size(); ++i) {
        if (i > 0) out += i + 1 == clauses.size() ? " and " : ", ";
        out += clauses[i];
    }
    return out + ".";
}

} // namespace detail

/// Renders `f` with the exact template ("the frequency of 0.017, ..., 19
/// peaks") or the general template ("very high frequency, low average,
/// ..."). Clause order is shuffled by `rng`. General text needs `bins`.
inline std::string render_text(const FeatureVector& f, TextKind kind, const QuintileBins* bins, Rng& rng) {
    if (kind == TextKind::general && bins == nullptr) throw InvalidArgument("render_text: general text requires bins");
    std::vector<std::string> clauses;
    for (auto feat : all_features) {
        if (kind == TextKind::exact) {
            clauses.push_back(detail::exact_clause(feat, f));
        } else {
            const auto level = (*bins)[feat].level_of(f.get(feat));
            clauses.push_back(std::string(to_string(level)) + " " +
                              std::string(detail::general_nouns[static_cast<std::size_t>(feat)]));
        }
    }
    std::shuffle(clauses.begin(), clauses.end(), rng);
    return detail::join_clauses(clauses);
}

/// What a prompt says about each feature: an exact value, a quintile level,
/// or nothing.
struct ParsedText {
    std::array<std::optional<double>, feature_count> exact{};
    std::array<std::optional<Level>, feature_count> level{};

    bool mentions(Feature f) const {
        const auto i = static_cast<std::size_t>(f);
        return exact[i].has_value() || level[i].has_value();
    }

    /// All six features given exactly.
    std::optional<FeatureVector> features() const {
        FeatureVector out;
        for (auto f : all_features) {
            const auto& v = exact[static_cast<std::size_t>(f)];
            if (!v) return std::nullopt;
            out.set(f, *v);
        }
        return out;
    }

    bool operator==(const ParsedText&) const = default;
};

namespace detail {

inline bool consume_prefix(std::string_view& s, std::string_view prefix) {
    if (!s.starts_with(prefix)) return false;
    s.remove_prefix(prefix.size());
    return true;
}

inline std::optional<double> parse_number(std::string_view s) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc{} || res.ptr != end || s.empty()) return std::nullopt;
    return v;
}

inline std::optional<long> parse_count(std::string_view s) {
    long v = 0;
    const auto* end = s.data() + s.size();
    auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc{} || res.ptr != end || s.empty() || v < 0) return std::nullopt;
    return v;
}

inline void parse_clause(std::string_view clause, ParsedText& out) {
    auto fail = [&]() { throw ParseError("unparseable clause: '" + std::string(clause) + "'"); };
    auto store_exact = [&](Feature f, double v) {
        if (out.mentions(f)) throw ParseError("feature mentioned twice: '" + std::string(clause) + "'");
        out.exact[static_cast<std::size_t>(f)] = v;
    };

    constexpr std::array<std::pair<std::string_view, Feature>, 5> exact_prefixes{{
        {"the frequency of ", Feature::frequency},
        {"the skewness of ", Feature::skewness},
        {"the mean of ", Feature::mean},
        {"the variance of ", Feature::variance},
        {"the linear trend of ", Feature::linearity},
    }};
    for (const auto& [prefix, feat] : exact_prefixes) {
        std::string_view rest = clause;
        if (consume_prefix(rest, prefix)) {
            auto v = parse_number(rest);
            if (!v) fail();
            store_exact(feat, *v);
            return;
        }
    }
    for (std::string_view suffix : {std::string_view(" peaks"), std::string_view(" peak")}) {
        if (clause.ends_with(suffix)) {
            auto count = parse_count(clause.substr(0, clause.size() - suffix.size()));
            if (count) {
                store_exact(Feature::n_peaks, static_cast<double>(*count));
                return;
            }
        }
    }
    // General clause: "<level> <noun>". Longest level names first so
    // "very low" is not read as "low".
    for (std::size_t li : {std::size_t{0}, std::size_t{4}, std::size_t{1}, std::size_t{2}, std::size_t{3}}) {
        std::string_view rest = clause;
        if (!consume_prefix(rest, level_names[li]) || !consume_prefix(rest, " ")) continue;
        for (std::size_t fi = 0; fi < feature_count; ++fi) {
            if (rest == general_nouns[fi]) {
                const auto feat = all_features[fi];
                if (out.mentions(feat)) throw ParseError("feature mentioned twice: '" + std::string(clause) + "'");
                out.level[fi] = static_cast<Level>(li);
                return;
            }
        }
    }
    fail();
}

} // namespace detail

/// Inverse of render_text for either template (clause order arbitrary).
inline ParsedText parse_text(std::string_view text) {
    std::string_view s = text;
    if (!detail::consume_prefix(s, detail::text_prefix)) {
        throw ParseError("text must start with '" + std::string(detail::text_prefix) + "'");
    }
    if (s.ends_with('.')) s.remove_suffix(1);
    std::vector<std::string_view> clauses;
    // Split on ", " first; the final element may hold "X and Y".
    while (true) {
        auto pos = s.find(", ");
        if (pos == std::string_view::npos) break;
        clauses.push_back(s.substr(0, pos));
        s.remove_prefix(pos + 2);
    }
    if (auto pos = s.rfind(" and "); pos != std::string_view::npos) {
        clauses.push_back(s.substr(0, pos));
        clauses.push_back(s.substr(pos + 5));
    } else {
        clauses.push_back(s);
    }
    ParsedText out;
    for (auto c : clauses) detail::parse_clause(c, out);
    return out;
}

struct EncoderOptions {
    bool presence_bits = true;

    std::size_t dim() const noexcept { return presence_bits ? 2 * feature_count : feature_count; }
};

namespace detail {

inline double affine_unit(double v, const QuintileBin& b, Feature f, std::vector<std::string>* warnings) {
    if (!(b.max > b.min)) return 0.0;
    if (v < b.min || v > b.max) {
        if (warnings) {
            warnings->push_back("feature " + std::string(feature_name(f)) + " value " + shortest_decimal(v) +
                                " outside corpus range; clamped");
        }
        v = std::clamp(v, b.min, b.max);
    }
    return 2.0 * (v - b.min) / (b.max - b.min) - 1.0;
}

} // namespace detail

/// Per-feature affine map of the corpus range onto [−1, 1]; levels use the
/// bin midpoint; absent features encode as 0 with presence bit 0.
inline ConditionVector encode(const ParsedText& parsed, const QuintileBins& bins, EncoderOptions opts = {},
                              std::vector<std::string>* warnings = nullptr) {
    std::vector<double> values(opts.dim(), 0.0);
    for (auto f : all_features) {
        const auto i = static_cast<std::size_t>(f);
        std::optional<double> v = parsed.exact[i];
        if (!v && parsed.level[i]) v = bins[f].midpoint(*parsed.level[i]);
        if (!v) continue;
        values[i] = detail::affine_unit(*v, bins[f], f, warnings);
        if (opts.presence_bits) values[feature_count + i] = 1.0;
    }
    return ConditionVector(std::move(values));
}

inline ConditionVector encode(const FeatureVector& f, const QuintileBins& bins, EncoderOptions opts = {},
                              std::vector<std::string>* warnings = nullptr) {
    ParsedText p;
    for (auto feat : all_features) p.exact[static_cast<std::size_t>(feat)] = f.get(feat);
    return encode(p, bins, opts, warnings);
}

inline ConditionVector encode_null(EncoderOptions opts = {}) { return ConditionVector::null(opts.dim()); }

} // namespace text2data
