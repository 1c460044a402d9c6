#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace vaecf {

// SplitMix64 step. Used to expand seeds and derive independent streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derive a child seed from (seed, stream, index) so that e.g. the dropout mask
/// of step 17 does not depend on how many draws any other step consumed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

/// xoshiro256** generator. Every stochastic operation in the library takes an
/// explicit seed and builds one of these; the std:: distributions are avoided
/// because their output differs across standard library implementations.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed);

    std::uint64_t next();
    std::uint64_t operator()() { return next(); }
    static constexpr std::uint64_t min() { return 0; }
    static constexpr std::uint64_t max() { return ~std::uint64_t{0}; }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform();
    /// Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);
    /// Standard normal via Box-Muller; the second variate is cached.
    double normal();

    template <typename T>
    void shuffle(std::span<T> values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(values[i - 1], values[j]);
        }
    }

private:
    std::uint64_t s_[4];
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

/// Identity permutation of size n shuffled with the given generator.
std::vector<std::uint32_t> random_permutation(std::size_t n, Rng& rng);

}  // namespace vaecf
