// Seeded generators with independent per-index substreams.
#pragma once

#include <cstdint>
#include <limits>

#include "simeck/cipher.hpp"

namespace simeck {

constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept
{
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// xoshiro256** satisfying UniformRandomBitGenerator.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0) noexcept
    {
        std::uint64_t sm = seed;
        for (auto& w : s_)
            w = splitmix64(sm);
    }

    /// Generator for stream `index` under `seed`; streams are independent of
    /// how work is partitioned across threads.
    static Rng substream(std::uint64_t seed, std::uint64_t index) noexcept
    {
        std::uint64_t sm = seed ^ 0x6A09E667F3BCC909ULL;
        const std::uint64_t a = splitmix64(sm);
        std::uint64_t mix = a ^ (index * 0xD1342543DE82EF95ULL + 0x2545F4914F6CDD1DULL);
        return Rng(splitmix64(mix));
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
        const std::uint64_t result = rotl64(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl64(s_[3], 45);
        return result;
    }

    Word word() noexcept { return static_cast<Word>((*this)() >> 48); }
    State state() noexcept
    {
        const auto v = (*this)();
        return {static_cast<Word>(v >> 48), static_cast<Word>(v >> 32)};
    }
    MasterKey master_key() noexcept
    {
        const auto v = (*this)();
        return {{static_cast<Word>(v >> 48), static_cast<Word>(v >> 32), static_cast<Word>(v >> 16),
                 static_cast<Word>(v)}};
    }
    /// Uniform in [0, 1).
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
    /// Uniform in [0, bound) by rejection.
    std::uint64_t below(std::uint64_t bound) noexcept
    {
        const std::uint64_t limit = max() - max() % bound;
        std::uint64_t v;
        do {
            v = (*this)();
        } while (v >= limit);
        return v % bound;
    }
    bool coin() noexcept { return ((*this)() >> 63) != 0; }

private:
    static constexpr std::uint64_t rotl64(std::uint64_t x, int k) noexcept
    {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t s_[4]{};
};

}  // namespace simeck
