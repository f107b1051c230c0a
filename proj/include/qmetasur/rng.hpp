#pragma once

#include <cstdint>
#include <random>

namespace qmetasur {

using Rng = std::mt19937_64;

// Independent stream for (seed, stream...) so per-task or per-run generators never overlap.
template <typename... Ids>
[[nodiscard]] inline auto make_rng(std::uint64_t seed, Ids... stream) -> Rng {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32U),
                      static_cast<std::uint32_t>(stream)...};
    return Rng(seq);
}

[[nodiscard]] inline auto uniform(Rng& rng, double lo, double hi) -> double {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

[[nodiscard]] inline auto uniform_index(Rng& rng, std::size_t n) -> std::size_t {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

[[nodiscard]] inline auto normal(Rng& rng, double mean, double stddev) -> double {
    return std::normal_distribution<double>(mean, stddev)(rng);
}

} // namespace qmetasur
