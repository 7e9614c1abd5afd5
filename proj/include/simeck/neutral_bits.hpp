// Conforming pairs of a short classical differential and their neutral bits.
#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "simeck/cipher.hpp"
#include "simeck/parallel.hpp"

namespace simeck {

struct Differential {
    StateDiff input_diff;
    StateDiff output_diff;
    unsigned rounds = 0;

    friend bool operator==(const Differential&, const Differential&) = default;
};

/// Exact probability of the differential from the difference model.
double differential_probability(const Differential& d);

/// How plaintext bit indices 0..31 map onto (x, y).
enum class BitConvention {
    XY,  // packed x||y: j < 16 is y bit j, j >= 16 is x bit j-16
    YX,  // packed y||x: j < 16 is x bit j, j >= 16 is y bit j-16
};

std::string to_string(BitConvention c);
BitConvention parse_convention(const std::string& s);

/// XOR mask on a state that flips every listed bit.
StateDiff flip_mask(const std::vector<unsigned>& bits, BitConvention c);
bool bit_value(State s, unsigned bit, BitConvention c);

/// One plaintext pair at the differential's input, with the round keys it conforms under.
struct ConformingPair {
    State p;
    RoundKeys keys;

    State p_prime(const Differential& d) const noexcept { return p ^ d.input_diff; }
};

bool conforms(const Differential& d, State p, const RoundKeys& keys) noexcept;

struct CollectOptions {
    std::chrono::milliseconds timeout{std::chrono::minutes(10)};
    unsigned threads = default_thread_count();
};

/// Random keys and plaintexts until `count` pairs conform. Throws
/// std::invalid_argument when the probability is below 2^-20 and
/// ResourceError on timeout. Deterministic for a seed.
std::vector<ConformingPair> collect_conforming_pairs(const Differential& d, std::size_t count, std::uint64_t seed,
                                                     const CollectOptions& opt = {});

/// Fraction of pairs that still conform after flipping `bits` in both texts.
double neutrality(const std::vector<unsigned>& bits, const Differential& d, const std::vector<ConformingPair>& pairs,
                  BitConvention c);

/// Requirement on one plaintext bit (same indexing as flipped bits).
struct BitCondition {
    unsigned bit = 0;
    bool value = false;

    friend bool operator==(const BitCondition&, const BitCondition&) = default;
};

/// Plaintext index of bit i of the left word x.
unsigned left_word_bit(unsigned i, BitConvention c);

struct NeutralBitSet {
    std::vector<unsigned> bits;
    double neutrality = 0;
    std::vector<BitCondition> condition;
    std::size_t pair_count = 0;
    /// Partition too small to measure (fewer than kMinPartitionPairs pairs).
    bool insufficient = false;
    /// Neutrality over all pairs, for conditional sets.
    std::optional<double> unconditional;
};

inline constexpr std::size_t kMinPartitionPairs = 50;

/// Neutrality of `bits` over pairs whose first plaintext meets `cond`.
/// Throws std::invalid_argument if a condition bit is also flipped.
NeutralBitSet measure_conditional(const std::vector<unsigned>& bits, const std::vector<BitCondition>& cond,
                                  const Differential& d, const std::vector<ConformingPair>& pairs, BitConvention c);

/// Singles, then pairs (and triples for max_set_size 3) with no neutral
/// proper subset; returns those with neutrality >= threshold, best first.
std::vector<NeutralBitSet> search_neutral_bits(const Differential& d, unsigned max_set_size,
                                               const std::vector<ConformingPair>& pairs, double threshold,
                                               BitConvention c, unsigned threads = default_thread_count());

/// Partitions pairs by the values of condition_bits and, per partition, reports
/// candidate bit-sets with neutrality >= threshold. Undersized partitions yield
/// one entry flagged insufficient.
std::vector<NeutralBitSet> search_csnbs(const Differential& d, const std::vector<std::vector<unsigned>>& candidates,
                                        const std::vector<unsigned>& condition_bits,
                                        const std::vector<ConformingPair>& pairs, double threshold, BitConvention c);

/// The 3-round differential's published neutral sets, used to pick the convention.
std::vector<std::vector<unsigned>> reference_neutral_sets_3r();
Differential reference_differential_3r();
Differential reference_differential_4r();

struct Calibration {
    BitConvention convention = BitConvention::XY;
    /// Lowest reference-set neutrality under the chosen convention.
    double worst = 0;
    double worst_other = 0;
};

/// XY unless some reference set falls below 0.98 there and YX does better.
Calibration calibrate_convention(const std::vector<ConformingPair>& pairs_3r);

/// {"bits":[...],"neutrality":..,"condition":[[bit,value],..],"convention":"..","pair_count":..,"seed":..}
std::string to_json_line(const NeutralBitSet& s, BitConvention c, std::uint64_t seed);

}  // namespace simeck
