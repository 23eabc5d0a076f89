#pragma once

#include <cstdint>
#include <random>

namespace cqcd {

/// SplitMix64 finalizer. Used to derive independent stream seeds from
/// (master seed, stream index) pairs.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Random stream handle. Wraps a 64-bit Mersenne Twister and owns the normal
/// distribution state, so draws depend only on the seed and the call sequence.
/// Satisfies UniformRandomBitGenerator.
class Rng {
public:
    using result_type = std::mt19937_64::result_type;

    explicit Rng(std::uint64_t seed = 5489u) : engine_(seed) {}

    /// Stream `stream` of an experiment seeded with `master`. Replica results
    /// never depend on which worker runs them.
    static Rng stream(std::uint64_t master, std::uint64_t stream) {
        const std::uint64_t mixed = splitmix64(master ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
        std::seed_seq seq{static_cast<std::uint32_t>(mixed), static_cast<std::uint32_t>(mixed >> 32),
                          static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
        Rng rng;
        rng.engine_.seed(seq);
        return rng;
    }

    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

    double uniform() { return uniform_(engine_); }
    double normal() { return normal_(engine_); }

private:
    std::mt19937_64 engine_;
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace cqcd
