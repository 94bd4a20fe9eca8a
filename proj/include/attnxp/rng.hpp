#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace attnxp {

// All randomness goes through std::mt19937_64 with hand-written distributions,
// since the std:: distributions are not pinned across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n); n must be > 0. Rejection sampling, no modulo bias.
    std::uint64_t below(std::uint64_t n);
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

// Counter-based seed derivation: every sub-task of a run gets
// derive_seed(root, stream, index), a splitmix64 mix of the three values.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t index = 0) noexcept;

namespace streams {
inline constexpr std::uint64_t kSplit = 1;
inline constexpr std::uint64_t kInit = 2;
inline constexpr std::uint64_t kShuffle = 3;
inline constexpr std::uint64_t kPadDropout = 4;
inline constexpr std::uint64_t kModifications = 5;
inline constexpr std::uint64_t kSubsets = 6;
inline constexpr std::uint64_t kSample = 7;
inline constexpr std::uint64_t kPerturb = 8;
inline constexpr std::uint64_t kPairs = 9;
inline constexpr std::uint64_t kBaseline = 10;
inline constexpr std::uint64_t kFrozen = 11;
inline constexpr std::uint64_t kSynth = 12;
inline constexpr std::uint64_t kGradCheck = 13;
}  // namespace streams

}  // namespace attnxp
