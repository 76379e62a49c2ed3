#pragma once

#include <cstdint>
#include <random>

namespace fastslow {

/// SplitMix64 finalizer; used to derive independent stream keys.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Stream key as a pure function of (seed, purpose tag, member index).
constexpr std::uint64_t derive_key(std::uint64_t seed, std::uint64_t tag, std::uint64_t member) noexcept {
    return mix64(mix64(mix64(seed) ^ tag) ^ member);
}

/// Purpose tags keep streams for different roles disjoint.
namespace stream_tag {
inline constexpr std::uint64_t driver = 0x6472697665720001ULL;
inline constexpr std::uint64_t sde = 0x7364650000000002ULL;
inline constexpr std::uint64_t calibration = 0x63616c6962000003ULL;
inline constexpr std::uint64_t sampling = 0x73616d706c000004ULL;
inline constexpr std::uint64_t reference = 0x7265660000000005ULL;
inline constexpr std::uint64_t modes = 0x6d6f646573000006ULL;
}  // namespace stream_tag

/// Per-member random stream. The variate sequence depends only on the key, so a
/// member's n-th draw is a pure function of (seed, tag, member, n).
class RandomStream {
public:
    RandomStream() : RandomStream(0) {}
    explicit RandomStream(std::uint64_t key) { reseed(key); }
    RandomStream(std::uint64_t seed, std::uint64_t tag, std::uint64_t member)
        : RandomStream(derive_key(seed, tag, member)) {}

    void reseed(std::uint64_t key) {
        std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32),
                          static_cast<std::uint32_t>(mix64(key)),
                          static_cast<std::uint32_t>(mix64(key) >> 32)};
        engine_.seed(seq);
        normal_.reset();
    }

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    std::uint64_t bits() { return engine_(); }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace fastslow
