// Exact XOR-difference propagation through SIMECK32 rounds.
//
// For a fixed input difference a, f(x) ^ f(x ^ a) is affine in x, so the
// one-round output differences form a coset f(a) ^ span(L_a) with uniform
// probability 2^-rank(L_a). Distributions are stored sparsely, sorted by the
// packed difference dx||dy; a further round can be applied lazily as per-row
// coset sums (ExtendedDistribution) when the explicit table would not fit.
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "simeck/cipher.hpp"
#include "simeck/parallel.hpp"

namespace simeck {

/// Threshold of the DDT classifier: a pair is called real iff p(delta) > 2^-32.
inline constexpr double kRandomPairProbability = 0x1.0p-32;

/// Output differences of f for one input difference: offset ^ span(basis).
struct DiffSpace {
    Word offset = 0;
    int dim = 0;
    /// Echelon basis, leading bits strictly decreasing.
    std::array<Word, kWordBits> basis{};

    /// Canonical representative of v + span(basis): zero at every leading bit.
    constexpr Word reduce(Word v) const noexcept
    {
        for (int i = 0; i < dim; ++i) {
            const Word b = basis[i];
            if (v & leading_bit(b))
                v ^= b;
        }
        return v;
    }

    constexpr bool contains(Word beta) const noexcept { return reduce(static_cast<Word>(beta ^ offset)) == 0; }

    double probability() const noexcept;

    /// Calls fn(element) for every element of rep ^ span(basis), Gray-code order.
    template <class Fn>
    void for_each_in_coset(Word rep, Fn&& fn) const
    {
        Word g = rep;
        fn(g);
        const std::uint32_t n = 1U << dim;
        for (std::uint32_t i = 1; i < n; ++i) {
            g ^= basis[std::countr_zero(i)];
            fn(g);
        }
    }

    static constexpr Word leading_bit(Word b) noexcept
    {
        return static_cast<Word>(1U << (std::bit_width(static_cast<unsigned>(b)) - 1));
    }
};

DiffSpace f_diff_space(Word alpha) noexcept;

/// Process-wide table of f_diff_space for all 2^16 inputs.
const DiffSpace& cached_f_diff_space(Word alpha);

/// Exact distribution of f(x) ^ f(x ^ alpha) over uniform x, sorted by beta.
std::vector<std::pair<Word, double>> f_diff_distribution(Word alpha);

/// One Feistel round on differences: (gamma ^ dy, dx) with gamma ~ Df(dx).
std::vector<std::pair<StateDiff, double>> round_diff_transition(StateDiff d);

/// Read-only probability lookup shared by explicit and lazily extended tables.
class DifferenceOracle {
public:
    virtual ~DifferenceOracle() = default;
    virtual double query(StateDiff d) const noexcept = 0;
    virtual unsigned rounds() const noexcept = 0;
    virtual StateDiff input_diff() const noexcept = 0;
    virtual double pruned_mass() const noexcept = 0;
};

class SparseDistribution final : public DifferenceOracle {
public:
    SparseDistribution() = default;

    /// Builds from strictly increasing keys; throws std::invalid_argument otherwise.
    SparseDistribution(unsigned rounds, StateDiff input, double prune_floor, double pruned_mass,
                       std::vector<std::uint32_t> keys, std::vector<double> probs);

    /// The zero-round distribution {input: 1}.
    static SparseDistribution point(StateDiff input);

    double query(StateDiff d) const noexcept override;
    unsigned rounds() const noexcept override { return rounds_; }
    StateDiff input_diff() const noexcept override { return input_; }
    double pruned_mass() const noexcept override { return pruned_mass_; }
    double prune_floor() const noexcept { return prune_floor_; }

    std::size_t size() const noexcept { return keys_.size(); }
    std::span<const std::uint32_t> keys() const noexcept { return keys_; }
    std::span<const double> probs() const noexcept { return probs_; }

    /// Index range of entries whose dx equals `dx`.
    std::pair<std::size_t, std::size_t> row(Word dx) const noexcept
    {
        return {row_offsets_[dx], row_offsets_[std::size_t{dx} + 1]};
    }

    /// Compensated sum of all stored probabilities.
    double total_mass() const noexcept;

    /// Most likely difference; ties go to the smallest packed value.
    std::pair<StateDiff, double> argmax() const;

    std::size_t memory_bytes() const noexcept;

private:
    void build_index();

    unsigned rounds_ = 0;
    StateDiff input_{};
    double prune_floor_ = 0.0;
    double pruned_mass_ = 0.0;
    std::vector<std::uint32_t> keys_;
    std::vector<double> probs_;
    std::vector<std::uint64_t> row_offsets_;
};

/// base + one more round, kept as coset sums per new dy (= base dx).
/// P(dx', dy') = 2^-dim(dy') * S(dy', reduce(dx')).
class ExtendedDistribution final : public DifferenceOracle {
public:
    explicit ExtendedDistribution(const SparseDistribution& base, double prune_floor = 0.0,
                                  unsigned threads = default_thread_count());

    double query(StateDiff d) const noexcept override;
    unsigned rounds() const noexcept override { return rounds_; }
    StateDiff input_diff() const noexcept override { return input_; }
    double pruned_mass() const noexcept override { return pruned_mass_; }
    double prune_floor() const noexcept { return prune_floor_; }

    /// Number of explicit entries this table represents.
    std::uint64_t support_size() const noexcept;
    std::size_t coset_count() const noexcept { return reps_.size(); }

    /// fn(dy, rep, dim, coset_mass) for every stored coset.
    template <class Fn>
    void for_each_coset(Fn&& fn) const
    {
        for (std::uint32_t dy = 0; dy < 0x10000; ++dy) {
            const auto& space = cached_f_diff_space(static_cast<Word>(dy));
            for (std::uint64_t i = row_offsets_[dy]; i < row_offsets_[dy + 1]; ++i)
                fn(static_cast<Word>(dy), reps_[i], space.dim, sums_[i]);
        }
    }

    std::pair<std::uint64_t, std::uint64_t> row(Word dy) const noexcept
    {
        return {row_offsets_[dy], row_offsets_[std::size_t{dy} + 1]};
    }
    std::span<const Word> reps() const noexcept { return reps_; }
    std::span<const double> sums() const noexcept { return sums_; }

private:
    unsigned rounds_ = 0;
    StateDiff input_{};
    double prune_floor_ = 0.0;
    double pruned_mass_ = 0.0;
    std::vector<std::uint64_t> row_offsets_;
    std::vector<Word> reps_;
    std::vector<double> sums_;
};

struct PropagateOptions {
    double prune_floor = 0.0;
    /// Hard cap on the explicit table size in bytes; 0 disables the cap.
    std::uint64_t memory_cap_bytes = 0;
    /// Where the last completed round is written when the cap is hit.
    std::filesystem::path checkpoint_path;
    unsigned threads = default_thread_count();
    std::function<void(unsigned round, std::size_t entries)> on_round;
};

/// Expands the lazy round into an explicit table. Throws ResourceError (after
/// checkpointing `checkpoint_of`, when given) if the result exceeds the cap.
SparseDistribution materialize(const ExtendedDistribution& ext, const PropagateOptions& options,
                               const SparseDistribution* checkpoint_of = nullptr);

SparseDistribution advance(const SparseDistribution& dist, const PropagateOptions& options = {});

SparseDistribution propagate(StateDiff input, unsigned rounds, const PropagateOptions& options = {});

/// Explicit table for min(rounds, max_explicit_rounds) rounds, extended lazily
/// by one round when rounds == max_explicit_rounds + 1.
std::shared_ptr<const DifferenceOracle> make_difference_table(StateDiff input, unsigned rounds,
                                                              unsigned max_explicit_rounds,
                                                              const PropagateOptions& options = {});

enum class AccuracyMethod { Exact, MonteCarlo };

struct AccuracyReport {
    double acc = 0.0;
    double tpr = 0.0;
    double tnr = 0.0;
    unsigned m = 1;
    AccuracyMethod method = AccuracyMethod::Exact;
    std::uint64_t sample_count = 0;
    double pruned_mass = 0.0;
    std::string warning;
};

/// Pruned mass above this is reported in AccuracyReport::warning.
inline constexpr double kPrunedMassWarning = 0.05;

/// TPR = sum of p > 2^-32, TNR = 1 - |{p > 2^-32}| / 2^32.
AccuracyReport exact_single_pair_accuracy(const SparseDistribution& dist);
AccuracyReport exact_single_pair_accuracy(const ExtendedDistribution& dist);

/// Combines m independent single-pair responses by averaging Z = p / (p + 2^-32).
AccuracyReport combined_accuracy_mc(const DifferenceOracle& dist, unsigned m, std::uint64_t samples,
                                    std::uint64_t seed, unsigned threads = default_thread_count());

/// "SDDT" file: little-endian header, (diff u32, prob f64) entries, CRC32.
void save_distribution(const SparseDistribution& dist, const std::filesystem::path& path);
SparseDistribution load_distribution(const std::filesystem::path& path);

/// Parses "0xXXXX:0xYYYY" (dx:dy); throws std::invalid_argument.
StateDiff parse_diff(const std::string& text);
std::string format_diff(StateDiff d);

}  // namespace simeck
