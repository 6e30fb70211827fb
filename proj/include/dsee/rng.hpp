#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dsee {

/// SplitMix64 finalizer; used to derive independent stream seeds from one
/// 64-bit master seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed of substream `index` under `master`.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// Random source with platform-independent output.
///
/// std::mt19937_64 is fully specified by the standard; the distributions in
/// <random> are not, so the conversions to doubles and bounded integers are
/// done here.
class Rng {
public:
    static constexpr std::string_view algorithm = "mt19937_64+splitmix64";

    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n) by rejection, n > 0.
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    bool operator==(const Rng&) const = default;

private:
    std::mt19937_64 engine_;
};

} // namespace dsee
