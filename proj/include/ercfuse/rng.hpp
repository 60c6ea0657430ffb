#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace ercfuse {

/// Portable pseudo-random stream used for every shuffle in the library.
///
/// State is seeded with one round of SplitMix64 (increment 0x9E3779B97F4A7C15,
/// mixers 0xBF58476D1CE4E5B9 / 0x94D049BB133111EB); a zero result is replaced by
/// 0x9E3779B97F4A7C15. Each draw is xorshift64* with shifts (12, 25, 27) and
/// multiplier 0x2545F4914F6CDD1D. Bounded draws use rejection sampling on the
/// top of the range, so a given seed yields the same sequence on any platform.
class Xorshift64Star {
public:
    explicit Xorshift64Star(std::uint64_t seed) noexcept {
        std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        z ^= z >> 31;
        state_ = z != 0 ? z : 0x9E3779B97F4A7C15ULL;
    }

    std::uint64_t next() noexcept {
        state_ ^= state_ >> 12;
        state_ ^= state_ << 25;
        state_ ^= state_ >> 27;
        return state_ * 0x2545F4914F6CDD1DULL;
    }

    // Uniform integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound) noexcept {
        const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
        std::uint64_t r = next();
        while (r >= limit) {
            r = next();
        }
        return r % bound;
    }

    // Uniform double in [0, 1) from the top 53 bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Fisher-Yates, descending i, swap with j = below(i + 1).
    template <typename T>
    void shuffle(std::span<T> items) noexcept {
        if (items.size() < 2) {
            return;
        }
        for (std::size_t i = items.size() - 1; i > 0; --i) {
            const auto j = static_cast<std::size_t>(below(i + 1));
            std::swap(items[i], items[j]);
        }
    }

private:
    std::uint64_t state_;
};

}  // namespace ercfuse
