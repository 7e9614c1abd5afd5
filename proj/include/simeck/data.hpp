// Labelled multi-pair datasets and the key-free per-pair feature block.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "simeck/cipher.hpp"
#include "simeck/parallel.hpp"

namespace simeck {

/// The two ciphertexts of one plaintext pair.
struct CipherPair {
    State c;
    State c_prime;

    constexpr StateDiff diff() const noexcept { return c ^ c_prime; }
    friend constexpr bool operator==(const CipherPair&, const CipherPair&) = default;
};

/// Per-pair words: dx_r, dy_r, x_r, y_r, x'_r, y'_r, dy_{r-1}, p.dy_{r-2}.
using FeatureBlock = std::array<Word, 8>;
inline constexpr std::size_t kFeatureWords = 8;

enum Feature : std::size_t {
    kDeltaX = 0,
    kDeltaY = 1,
    kX = 2,
    kY = 3,
    kXPrime = 4,
    kYPrime = 5,
    kDeltaYPrev = 6,
    kPDeltaYPrev2 = 7,
};

/// Right branch one round back, up to the unknown round key: y_{r-1} = A ^ k_{r-1}.
constexpr Word keyfree_previous_y(State c) noexcept { return static_cast<Word>(round_function(c.y) ^ c.x); }

/// Difference one round before the ciphertexts; exact because the key cancels.
constexpr StateDiff keyfree_previous_difference(const CipherPair& p) noexcept
{
    return {static_cast<Word>(p.c.y ^ p.c_prime.y),
            static_cast<Word>(keyfree_previous_y(p.c) ^ keyfree_previous_y(p.c_prime))};
}

constexpr FeatureBlock derive_features(const CipherPair& p) noexcept
{
    const Word a = keyfree_previous_y(p.c);
    const Word a_prime = keyfree_previous_y(p.c_prime);
    const Word p_dy2 = static_cast<Word>(round_function(a) ^ p.c.y ^ round_function(a_prime) ^ p.c_prime.y);
    return {static_cast<Word>(p.c.x ^ p.c_prime.x),
            static_cast<Word>(p.c.y ^ p.c_prime.y),
            p.c.x,
            p.c.y,
            p.c_prime.x,
            p.c_prime.y,
            static_cast<Word>(a ^ a_prime),
            p_dy2};
}

constexpr CipherPair pair_from_features(std::span<const Word, kFeatureWords> f) noexcept
{
    return {{f[kX], f[kY]}, {f[kXPrime], f[kYPrime]}};
}

struct DatasetSpec {
    unsigned rounds = 1;
    unsigned m = 1;
    std::uint64_t count = 0;
    StateDiff input_diff{0x0000, 0x0040};
    double positive_fraction = 0.5;
    std::uint64_t seed = 0;
};

class Dataset {
public:
    unsigned rounds = 0;
    unsigned m = 0;
    StateDiff input_diff{};
    std::uint64_t seed = 0;
    std::vector<std::uint8_t> labels;
    /// count * m * 8 words, sample-major then pair-major.
    std::vector<Word> words;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t positives() const noexcept;

    std::span<const Word> sample_words(std::size_t i) const noexcept
    {
        const std::size_t stride = std::size_t{m} * kFeatureWords;
        return {words.data() + i * stride, stride};
    }
    CipherPair pair(std::size_t i, std::size_t j) const noexcept
    {
        return pair_from_features(std::span<const Word, kFeatureWords>(
            words.data() + (i * m + j) * kFeatureWords, kFeatureWords));
    }
    std::vector<CipherPair> pairs(std::size_t i) const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Positive samples: m plaintext pairs at input_diff under one uniform key.
/// Negative samples: the second plaintext of each pair is redrawn uniformly.
/// Exactly round(count * positive_fraction) samples are positive.
Dataset generate_dataset(const DatasetSpec& spec, unsigned threads = default_thread_count());

/// "SDNS" file: header, per sample label u8 + m*8 u16 words, CRC32.
void save_dataset(const Dataset& data, const std::filesystem::path& path);

struct DatasetExpectation {
    std::optional<unsigned> rounds;
    std::optional<unsigned> m;
};

/// Throws FormatError on corruption or when the header contradicts `expect`.
Dataset load_dataset(const std::filesystem::path& path, const DatasetExpectation& expect = {});

}  // namespace simeck
