#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <limits>

namespace bmf {

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t& x) noexcept {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
}

} // namespace detail

/// Hash a seed together with a list of stream coordinates into a new seed.
/// Distinct coordinate tuples give (with overwhelming probability) distinct,
/// statistically independent xoshiro states.
inline constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                           std::initializer_list<std::uint64_t> coords) noexcept {
    std::uint64_t h = seed ^ 0x5851f42d4c957f2dULL;
    std::uint64_t out = detail::splitmix64(h);
    for (std::uint64_t c : coords) {
        h ^= c + 0x632be59bd9b4e019ULL + (out << 6) + (out >> 2);
        out = detail::splitmix64(h);
    }
    return out;
}

/// Seeded 64-bit generator (xoshiro256++). Satisfies
/// UniformRandomBitGenerator so it plugs into <random> distributions.
///
/// A handle is owned by one worker at a time; parallel code derives one
/// stream per work item with `derive`.
class Rng {
  public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) noexcept : seed_(seed) {
        std::uint64_t x = seed;
        for (auto& s : state_)
            s = detail::splitmix64(x);
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept {
        return std::numeric_limits<result_type>::max();
    }

    result_type operator()() noexcept {
        const std::uint64_t result = detail::rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in the open interval (0, 1).
    double uniform() noexcept {
        // 53 random bits, shifted by half an ulp so 0 is never returned.
        return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
    }

    std::uint64_t seed() const noexcept { return seed_; }

    /// Independent child stream addressed by `coords`; does not advance this
    /// generator.
    Rng derive(std::initializer_list<std::uint64_t> coords) const noexcept {
        return Rng(derive_seed(seed_, coords));
    }

  private:
    std::uint64_t seed_;
    std::array<std::uint64_t, 4> state_{};
};

} // namespace bmf
