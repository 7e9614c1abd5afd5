// Scoring interface over m-pair samples, and the DDT-backed scorer.
#pragma once

#include <memory>
#include <span>
#include <string>

#include "simeck/data.hpp"
#include "simeck/diff_model.hpp"

namespace simeck {

class Distinguisher {
public:
    virtual ~Distinguisher() = default;

    /// Rounds of the ciphertexts this scorer expects.
    virtual unsigned rounds() const noexcept = 0;
    virtual std::string id() const = 0;
    /// Required pairs per sample, or 0 when any m is accepted.
    virtual unsigned native_pairs() const noexcept { return 0; }

    /// Pr(real | sample), in [0, 1].
    virtual double score(std::span<const CipherPair> sample) const = 0;

    /// Scores consecutive samples of m pairs: out.size() * m == pairs.size().
    virtual void score_batch(std::span<const CipherPair> pairs, unsigned m, std::span<double> out) const;
};

/// Mean of Z = p / (p + 2^-32) over pairs, where p is the (r-1)-round
/// probability of the key-free difference one round before the ciphertexts.
/// Throws std::invalid_argument unless table.rounds() + 1 == sample_rounds.
double ddt_score(std::span<const CipherPair> sample, const DifferenceOracle& table, unsigned sample_rounds);

class DdtDistinguisher final : public Distinguisher {
public:
    /// Scores (table->rounds() + 1)-round samples.
    explicit DdtDistinguisher(std::shared_ptr<const DifferenceOracle> table);

    unsigned rounds() const noexcept override { return table_->rounds() + 1; }
    std::string id() const override;
    double score(std::span<const CipherPair> sample) const override;
    void score_batch(std::span<const CipherPair> pairs, unsigned m, std::span<double> out) const override;

    double pair_response(const CipherPair& p) const noexcept
    {
        const double q = table_->query(keyfree_previous_difference(p));
        return q / (q + kRandomPairProbability);
    }

    const DifferenceOracle& table() const noexcept { return *table_; }

private:
    std::shared_ptr<const DifferenceOracle> table_;
};

/// Threshold-0.5 accuracy of d on a labelled dataset. Throws
/// std::invalid_argument when the dataset rounds or m do not fit d.
AccuracyReport evaluate(const Distinguisher& d, const Dataset& data, unsigned threads = default_thread_count());

}  // namespace simeck
