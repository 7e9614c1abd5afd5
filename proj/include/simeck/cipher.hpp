// SIMECK32/64 block cipher: round function, Feistel round, key schedule.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

namespace simeck {

using Word = std::uint16_t;

inline constexpr int kWordBits = 16;
inline constexpr unsigned kFullRounds = 32;

constexpr Word rotl(Word x, int r) noexcept
{
    r &= kWordBits - 1;
    if (r == 0)
        return x;
    return static_cast<Word>((x << r) | (x >> (kWordBits - r)));
}

constexpr Word rotr(Word x, int r) noexcept { return rotl(x, kWordBits - (r & (kWordBits - 1))); }

/// f_{a,b,c}(x) = (S^a(x) & S^b(x)) ^ S^c(x) for arbitrary rotation amounts.
constexpr Word generic_round_function(Word x, int a, int b, int c) noexcept
{
    return static_cast<Word>((rotl(x, a) & rotl(x, b)) ^ rotl(x, c));
}

/// The SIMECK round function f_{5,0,1}.
constexpr Word round_function(Word x) noexcept
{
    return static_cast<Word>((rotl(x, 5) & x) ^ rotl(x, 1));
}

struct StateDiff;

/// Cipher state (x = left branch, y = right branch). Packs as x||y.
struct State {
    Word x = 0;
    Word y = 0;

    constexpr std::uint32_t packed() const noexcept { return (std::uint32_t{x} << 16) | y; }
    static constexpr State unpack(std::uint32_t v) noexcept
    {
        return {static_cast<Word>(v >> 16), static_cast<Word>(v & 0xFFFF)};
    }
    friend constexpr bool operator==(const State&, const State&) = default;
};

/// XOR difference of two states. Packs as dx||dy.
struct StateDiff {
    Word dx = 0;
    Word dy = 0;

    constexpr std::uint32_t packed() const noexcept { return (std::uint32_t{dx} << 16) | dy; }
    static constexpr StateDiff unpack(std::uint32_t v) noexcept
    {
        return {static_cast<Word>(v >> 16), static_cast<Word>(v & 0xFFFF)};
    }
    friend constexpr bool operator==(const StateDiff&, const StateDiff&) = default;
};

constexpr StateDiff operator^(const State& a, const State& b) noexcept
{
    return {static_cast<Word>(a.x ^ b.x), static_cast<Word>(a.y ^ b.y)};
}

constexpr State operator^(const State& s, const StateDiff& d) noexcept
{
    return {static_cast<Word>(s.x ^ d.dx), static_cast<Word>(s.y ^ d.dy)};
}

constexpr State round_forward(State s, Word k) noexcept
{
    return {static_cast<Word>(round_function(s.x) ^ s.y ^ k), s.x};
}

constexpr State round_backward(State s, Word k) noexcept
{
    return {s.y, static_cast<Word>(round_function(s.y) ^ s.x ^ k)};
}

/// Master key registers in the order (t2, t1, t0, k0); k0 is the first round key.
struct MasterKey {
    std::array<Word, 4> words{};
    friend constexpr bool operator==(const MasterKey&, const MasterKey&) = default;
};

/// First `size()` round keys of the schedule. Fixed capacity, no allocation.
class RoundKeys {
public:
    constexpr RoundKeys() = default;

    constexpr std::size_t size() const noexcept { return count_; }
    constexpr bool empty() const noexcept { return count_ == 0; }
    constexpr Word operator[](std::size_t i) const noexcept { return keys_[i]; }
    constexpr Word& operator[](std::size_t i) noexcept { return keys_[i]; }
    constexpr Word back() const noexcept { return keys_[count_ - 1]; }

    std::span<const Word> span() const noexcept { return {keys_.data(), count_}; }
    operator std::span<const Word>() const noexcept { return span(); }

    /// Keeps only the first n keys (n <= size()).
    constexpr void truncate(std::size_t n) noexcept { count_ = n < count_ ? n : count_; }
    constexpr void push_back(Word k) noexcept { keys_[count_++] = k; }

    friend constexpr bool operator==(const RoundKeys& a, const RoundKeys& b) noexcept
    {
        if (a.count_ != b.count_)
            return false;
        for (std::size_t i = 0; i < a.count_; ++i)
            if (a.keys_[i] != b.keys_[i])
                return false;
        return true;
    }

private:
    std::array<Word, kFullRounds> keys_{};
    std::size_t count_ = 0;
};

/// Throws std::invalid_argument when rounds > 32.
RoundKeys expand_key(const MasterKey& mk, unsigned rounds);

constexpr State encrypt(State p, std::span<const Word> rk) noexcept
{
    for (Word k : rk)
        p = round_forward(p, k);
    return p;
}

constexpr State decrypt(State c, std::span<const Word> rk) noexcept
{
    for (auto it = rk.rbegin(); it != rk.rend(); ++it)
        c = round_backward(c, *it);
    return c;
}

}  // namespace simeck
