#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace text2data {

using Rng = std::mt19937_64;

/// Child seed derived from a parent seed and a fixed label, so the dataset,
/// model and evaluation streams never share state.
inline std::uint64_t derive_seed(std::uint64_t parent, std::string_view label, std::uint64_t index = 0) {
    std::vector<std::uint32_t> material{static_cast<std::uint32_t>(parent), static_cast<std::uint32_t>(parent >> 32),
                                        static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    for (unsigned char ch : label) material.push_back(ch);
    std::seed_seq seq(material.begin(), material.end());
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

inline Rng make_rng(std::uint64_t parent, std::string_view label, std::uint64_t index = 0) {
    return Rng(derive_seed(parent, label, index));
}

inline double standard_normal(Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(rng);
}

inline std::vector<double> standard_normal_vector(Rng& rng, std::size_t n) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> out(n);
    for (auto& v : out) v = dist(rng);
    return out;
}

} // namespace text2data
