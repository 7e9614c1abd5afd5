#include "simeck/distinguisher.hpp"

#include <stdexcept>
#include <vector>

namespace simeck {

void Distinguisher::score_batch(std::span<const CipherPair> pairs, unsigned m, std::span<double> out) const
{
    if (m == 0 || pairs.size() != out.size() * m)
        throw std::invalid_argument("score_batch: pairs.size() must equal out.size() * m");
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = score(pairs.subspan(i * m, m));
}

double ddt_score(std::span<const CipherPair> sample, const DifferenceOracle& table, unsigned sample_rounds)
{
    if (table.rounds() + 1 != sample_rounds)
        throw std::invalid_argument("ddt_score: a " + std::to_string(sample_rounds) + "-round sample needs a " +
                                    std::to_string(sample_rounds - 1) + "-round table, got " +
                                    std::to_string(table.rounds()));
    if (sample.empty())
        return 0.0;
    double z = 0.0;
    for (const auto& p : sample) {
        const double q = table.query(keyfree_previous_difference(p));
        z += q / (q + kRandomPairProbability);
    }
    return z / static_cast<double>(sample.size());
}

DdtDistinguisher::DdtDistinguisher(std::shared_ptr<const DifferenceOracle> table) : table_(std::move(table))
{
    if (!table_)
        throw std::invalid_argument("DdtDistinguisher: null table");
}

std::string DdtDistinguisher::id() const
{
    return "ddt:r" + std::to_string(rounds()) + ":" + format_diff(table_->input_diff());
}

double DdtDistinguisher::score(std::span<const CipherPair> sample) const
{
    if (sample.empty())
        return 0.0;
    double z = 0.0;
    for (const auto& p : sample)
        z += pair_response(p);
    return z / static_cast<double>(sample.size());
}

void DdtDistinguisher::score_batch(std::span<const CipherPair> pairs, unsigned m, std::span<double> out) const
{
    if (m == 0 || pairs.size() != out.size() * m)
        throw std::invalid_argument("score_batch: pairs.size() must equal out.size() * m");
    for (std::size_t i = 0; i < out.size(); ++i) {
        double z = 0.0;
        for (unsigned j = 0; j < m; ++j)
            z += pair_response(pairs[i * m + j]);
        out[i] = z / m;
    }
}

AccuracyReport evaluate(const Distinguisher& d, const Dataset& data, unsigned threads)
{
    if (data.rounds != d.rounds())
        throw std::invalid_argument("evaluate: dataset has " + std::to_string(data.rounds) + " rounds, distinguisher " +
                                    std::to_string(d.rounds()));
    if (d.native_pairs() != 0 && d.native_pairs() != data.m)
        throw std::invalid_argument("evaluate: distinguisher expects m=" + std::to_string(d.native_pairs()) +
                                    ", dataset has m=" + std::to_string(data.m));

    constexpr std::size_t kBatch = 1024;
    const std::size_t n = data.size();
    std::vector<double> scores(n);
    const std::size_t batches = (n + kBatch - 1) / kBatch;
    parallel_for(batches, threads, [&](std::size_t b) {
        const std::size_t begin = b * kBatch;
        const std::size_t end = std::min(n, begin + kBatch);
        std::vector<CipherPair> pairs;
        pairs.reserve((end - begin) * data.m);
        for (std::size_t i = begin; i < end; ++i)
            for (unsigned j = 0; j < data.m; ++j)
                pairs.push_back(data.pair(i, j));
        d.score_batch(pairs, data.m, std::span<double>(scores).subspan(begin, end - begin));
    });

    std::uint64_t pos = 0, neg = 0, tp = 0, tn = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool predicted = scores[i] > 0.5;
        if (data.labels[i]) {
            ++pos;
            tp += predicted;
        } else {
            ++neg;
            tn += !predicted;
        }
    }
    AccuracyReport r;
    r.m = data.m;
    r.method = AccuracyMethod::MonteCarlo;
    r.sample_count = n;
    r.tpr = pos ? static_cast<double>(tp) / static_cast<double>(pos) : 0.0;
    r.tnr = neg ? static_cast<double>(tn) / static_cast<double>(neg) : 0.0;
    r.acc = n ? static_cast<double>(tp + tn) / static_cast<double>(n) : 0.0;
    return r;
}

}  // namespace simeck
