#include "simeck/diff_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "simeck/binary_io.hpp"
#include "simeck/errors.hpp"
#include "simeck/rng.hpp"

namespace simeck {

namespace {

constexpr std::size_t kRows = 0x10000;
constexpr std::size_t kBuildChunks = 64;
constexpr std::uint32_t kSddtVersion = 1;

struct KahanSum {
    double sum = 0.0;
    double c = 0.0;
    void add(double v) noexcept
    {
        const double y = v - c;
        const double t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
};

}  // namespace

double DiffSpace::probability() const noexcept { return std::ldexp(1.0, -dim); }

DiffSpace f_diff_space(Word alpha) noexcept
{
    DiffSpace s;
    s.offset = round_function(alpha);
    const Word rot_alpha = rotl(alpha, 5);
    for (int i = 0; i < kWordBits; ++i) {
        const Word e = static_cast<Word>(1U << i);
        Word v = static_cast<Word>((rotl(e, 5) & alpha) ^ (rot_alpha & e));
        v = s.reduce(v);
        if (v == 0)
            continue;
        int pos = s.dim;
        while (pos > 0 && s.basis[pos - 1] < v) {
            s.basis[pos] = s.basis[pos - 1];
            --pos;
        }
        s.basis[pos] = v;
        ++s.dim;
    }
    return s;
}

const DiffSpace& cached_f_diff_space(Word alpha)
{
    static const std::vector<DiffSpace> table = [] {
        std::vector<DiffSpace> t(kRows);
        for (std::size_t a = 0; a < kRows; ++a)
            t[a] = f_diff_space(static_cast<Word>(a));
        return t;
    }();
    return table[alpha];
}

std::vector<std::pair<Word, double>> f_diff_distribution(Word alpha)
{
    const DiffSpace& s = cached_f_diff_space(alpha);
    const double p = s.probability();
    std::vector<std::pair<Word, double>> out;
    out.reserve(std::size_t{1} << s.dim);
    s.for_each_in_coset(s.offset, [&](Word beta) { out.emplace_back(beta, p); });
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::pair<StateDiff, double>> round_diff_transition(StateDiff d)
{
    std::vector<std::pair<StateDiff, double>> out;
    for (const auto& [gamma, p] : f_diff_distribution(d.dx))
        out.push_back({StateDiff{static_cast<Word>(gamma ^ d.dy), d.dx}, p});
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.first.packed() < b.first.packed(); });
    return out;
}

// ---------------------------------------------------------------------------
// SparseDistribution

SparseDistribution::SparseDistribution(unsigned rounds, StateDiff input, double prune_floor, double pruned_mass,
                                       std::vector<std::uint32_t> keys, std::vector<double> probs)
    : rounds_(rounds), input_(input), prune_floor_(prune_floor), pruned_mass_(pruned_mass),
      keys_(std::move(keys)), probs_(std::move(probs))
{
    if (keys_.size() != probs_.size())
        throw std::invalid_argument("SparseDistribution: key/probability count mismatch");
    for (std::size_t i = 1; i < keys_.size(); ++i)
        if (keys_[i - 1] >= keys_[i])
            throw std::invalid_argument("SparseDistribution: keys must be strictly increasing");
    build_index();
}

SparseDistribution SparseDistribution::point(StateDiff input)
{
    return SparseDistribution(0, input, 0.0, 0.0, {input.packed()}, {1.0});
}

void SparseDistribution::build_index()
{
    row_offsets_.assign(kRows + 1, 0);
    for (std::uint32_t k : keys_)
        ++row_offsets_[(k >> 16) + 1];
    std::partial_sum(row_offsets_.begin(), row_offsets_.end(), row_offsets_.begin());
}

double SparseDistribution::query(StateDiff d) const noexcept
{
    if (keys_.empty())
        return 0.0;
    const auto [b, e] = row(d.dx);
    const std::uint32_t key = d.packed();
    const auto first = keys_.begin() + static_cast<std::ptrdiff_t>(b);
    const auto last = keys_.begin() + static_cast<std::ptrdiff_t>(e);
    const auto it = std::lower_bound(first, last, key);
    if (it == last || *it != key)
        return 0.0;
    return probs_[static_cast<std::size_t>(it - keys_.begin())];
}

double SparseDistribution::total_mass() const noexcept
{
    KahanSum s;
    for (double p : probs_)
        s.add(p);
    return s.sum;
}

std::pair<StateDiff, double> SparseDistribution::argmax() const
{
    if (probs_.empty())
        throw std::logic_error("argmax of an empty distribution");
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs_.size(); ++i)
        if (probs_[i] > probs_[best])
            best = i;
    return {StateDiff::unpack(keys_[best]), probs_[best]};
}

std::size_t SparseDistribution::memory_bytes() const noexcept
{
    return keys_.capacity() * sizeof(std::uint32_t) + probs_.capacity() * sizeof(double) +
           row_offsets_.capacity() * sizeof(std::uint64_t);
}

// ---------------------------------------------------------------------------
// ExtendedDistribution

ExtendedDistribution::ExtendedDistribution(const SparseDistribution& base, double prune_floor, unsigned threads)
    : rounds_(base.rounds() + 1), input_(base.input_diff()), prune_floor_(prune_floor)
{
    if (!(prune_floor >= 0.0))
        throw std::invalid_argument("prune_floor must be >= 0");

    struct Chunk {
        std::vector<std::uint64_t> row_sizes;
        std::vector<Word> reps;
        std::vector<double> sums;
        double pruned = 0.0;
    };
    std::vector<Chunk> chunks(kBuildChunks);
    const auto keys = base.keys();
    const auto probs = base.probs();

    parallel_chunks(kRows, kBuildChunks, threads, [&](std::size_t begin, std::size_t end, std::size_t c) {
        Chunk& out = chunks[c];
        out.row_sizes.assign(end - begin, 0);
        std::vector<std::pair<Word, double>> row;
        for (std::size_t a = begin; a < end; ++a) {
            const auto [rb, re] = base.row(static_cast<Word>(a));
            if (rb == re)
                continue;
            const DiffSpace& space = cached_f_diff_space(static_cast<Word>(a));
            row.clear();
            for (std::size_t i = rb; i < re; ++i) {
                const Word dy = static_cast<Word>(keys[i] & 0xFFFF);
                row.emplace_back(space.reduce(static_cast<Word>(dy ^ space.offset)), probs[i]);
            }
            // Stable: sums accumulate in increasing dy order for every coset.
            std::stable_sort(row.begin(), row.end(),
                             [](const auto& x, const auto& y) { return x.first < y.first; });
            const double scale = space.probability();
            std::size_t i = 0;
            while (i < row.size()) {
                const Word rep = row[i].first;
                double s = 0.0;
                for (; i < row.size() && row[i].first == rep; ++i)
                    s += row[i].second;
                if (s * scale < prune_floor) {
                    out.pruned += s;
                    continue;
                }
                out.reps.push_back(rep);
                out.sums.push_back(s);
                ++out.row_sizes[a - begin];
            }
        }
    });

    row_offsets_.assign(kRows + 1, 0);
    std::size_t total = 0;
    for (const auto& c : chunks)
        total += c.reps.size();
    reps_.reserve(total);
    sums_.reserve(total);
    pruned_mass_ = base.pruned_mass();
    for (std::size_t c = 0; c < kBuildChunks; ++c) {
        const std::size_t begin = kRows * c / kBuildChunks;
        for (std::size_t i = 0; i < chunks[c].row_sizes.size(); ++i)
            row_offsets_[begin + i + 1] = chunks[c].row_sizes[i];
        reps_.insert(reps_.end(), chunks[c].reps.begin(), chunks[c].reps.end());
        sums_.insert(sums_.end(), chunks[c].sums.begin(), chunks[c].sums.end());
        pruned_mass_ += chunks[c].pruned;
        chunks[c] = Chunk{};
    }
    std::partial_sum(row_offsets_.begin(), row_offsets_.end(), row_offsets_.begin());
}

double ExtendedDistribution::query(StateDiff d) const noexcept
{
    const std::uint64_t b = row_offsets_[d.dy];
    const std::uint64_t e = row_offsets_[std::size_t{d.dy} + 1];
    if (b == e)
        return 0.0;
    const DiffSpace& space = cached_f_diff_space(d.dy);
    const Word rep = space.reduce(d.dx);
    const auto first = reps_.begin() + static_cast<std::ptrdiff_t>(b);
    const auto last = reps_.begin() + static_cast<std::ptrdiff_t>(e);
    const auto it = std::lower_bound(first, last, rep);
    if (it == last || *it != rep)
        return 0.0;
    return sums_[static_cast<std::size_t>(it - reps_.begin())] * space.probability();
}

std::uint64_t ExtendedDistribution::support_size() const noexcept
{
    std::uint64_t n = 0;
    for (std::size_t dy = 0; dy < kRows; ++dy)
        n += (row_offsets_[dy + 1] - row_offsets_[dy]) << cached_f_diff_space(static_cast<Word>(dy)).dim;
    return n;
}

// ---------------------------------------------------------------------------
// Propagation

SparseDistribution materialize(const ExtendedDistribution& ext, const PropagateOptions& options,
                               const SparseDistribution* checkpoint_of)
{
    const auto reps = ext.reps();
    const auto sums = ext.sums();

    // Pass 1: entries per new dx, per chunk of new dy.
    std::vector<std::vector<std::uint32_t>> counts(kBuildChunks);
    parallel_chunks(kRows, kBuildChunks, options.threads, [&](std::size_t begin, std::size_t end, std::size_t c) {
        auto& cnt = counts[c];
        cnt.assign(kRows, 0);
        for (std::size_t dy = begin; dy < end; ++dy) {
            const auto [b, e] = ext.row(static_cast<Word>(dy));
            if (b == e)
                continue;
            const DiffSpace& space = cached_f_diff_space(static_cast<Word>(dy));
            for (std::uint64_t i = b; i < e; ++i)
                space.for_each_in_coset(reps[i], [&](Word dx) { ++cnt[dx]; });
        }
    });

    std::vector<std::uint64_t> row_total(kRows + 1, 0);
    for (const auto& cnt : counts)
        for (std::size_t dx = 0; dx < kRows; ++dx)
            row_total[dx + 1] += cnt[dx];
    std::partial_sum(row_total.begin(), row_total.end(), row_total.begin());
    const std::uint64_t total = row_total[kRows];

    const std::uint64_t needed = total * (sizeof(std::uint32_t) + sizeof(double)) + (kRows + 1) * sizeof(std::uint64_t);
    if (options.memory_cap_bytes != 0 && needed > options.memory_cap_bytes) {
        std::string where;
        if (checkpoint_of != nullptr && !options.checkpoint_path.empty()) {
            save_distribution(*checkpoint_of, options.checkpoint_path);
            where = "; round " + std::to_string(checkpoint_of->rounds()) + " checkpointed to " +
                    options.checkpoint_path.string();
        }
        throw ResourceError("round " + std::to_string(ext.rounds()) + " needs " + std::to_string(needed) +
                            " bytes, cap is " + std::to_string(options.memory_cap_bytes) + where);
    }

    // Per-chunk write cursors: within a row, chunk c precedes chunk c+1, which keeps
    // dy (the low half of the key) increasing.
    std::vector<std::vector<std::uint64_t>> cursor(kBuildChunks, std::vector<std::uint64_t>(kRows));
    {
        std::vector<std::uint64_t> running(row_total.begin(), row_total.end() - 1);
        for (std::size_t c = 0; c < kBuildChunks; ++c) {
            for (std::size_t dx = 0; dx < kRows; ++dx) {
                cursor[c][dx] = running[dx];
                running[dx] += counts[c][dx];
            }
            counts[c] = {};
        }
    }

    std::vector<std::uint32_t> keys(total);
    std::vector<double> probs(total);
    parallel_chunks(kRows, kBuildChunks, options.threads, [&](std::size_t begin, std::size_t end, std::size_t c) {
        auto& cur = cursor[c];
        for (std::size_t dy = begin; dy < end; ++dy) {
            const auto [b, e] = ext.row(static_cast<Word>(dy));
            if (b == e)
                continue;
            const DiffSpace& space = cached_f_diff_space(static_cast<Word>(dy));
            const double scale = space.probability();
            for (std::uint64_t i = b; i < e; ++i) {
                const double q = sums[i] * scale;
                space.for_each_in_coset(reps[i], [&](Word dx) {
                    const std::uint64_t at = cur[dx]++;
                    keys[at] = (std::uint32_t{dx} << 16) | static_cast<std::uint32_t>(dy);
                    probs[at] = q;
                });
            }
        }
    });

    return SparseDistribution(ext.rounds(), ext.input_diff(), ext.prune_floor(), ext.pruned_mass(),
                              std::move(keys), std::move(probs));
}

SparseDistribution advance(const SparseDistribution& dist, const PropagateOptions& options)
{
    const ExtendedDistribution ext(dist, options.prune_floor, options.threads);
    return materialize(ext, options, &dist);
}

SparseDistribution propagate(StateDiff input, unsigned rounds, const PropagateOptions& options)
{
    if (!(options.prune_floor >= 0.0))
        throw std::invalid_argument("prune_floor must be >= 0");
    SparseDistribution cur = SparseDistribution::point(input);
    for (unsigned r = 1; r <= rounds; ++r) {
        cur = advance(cur, options);
        if (options.on_round)
            options.on_round(r, cur.size());
    }
    return cur;
}

std::shared_ptr<const DifferenceOracle> make_difference_table(StateDiff input, unsigned rounds,
                                                              unsigned max_explicit_rounds,
                                                              const PropagateOptions& options)
{
    if (rounds <= max_explicit_rounds)
        return std::make_shared<const SparseDistribution>(propagate(input, rounds, options));
    if (rounds == max_explicit_rounds + 1) {
        const SparseDistribution base = propagate(input, rounds - 1, options);
        return std::make_shared<const ExtendedDistribution>(base, options.prune_floor, options.threads);
    }
    throw ResourceError("a " + std::to_string(rounds) + "-round table needs more than one lazy round over " +
                        std::to_string(max_explicit_rounds) + " explicit rounds");
}

// ---------------------------------------------------------------------------
// Accuracy

namespace {

void finish(AccuracyReport& r)
{
    r.acc = 0.5 * (r.tpr + r.tnr);
    if (r.pruned_mass > kPrunedMassWarning)
        r.warning = "pruned mass " + std::to_string(r.pruned_mass) + " exceeds " + std::to_string(kPrunedMassWarning);
}

}  // namespace

AccuracyReport exact_single_pair_accuracy(const SparseDistribution& dist)
{
    KahanSum tpr;
    std::uint64_t positives = 0;
    const auto probs = dist.probs();
    for (double p : probs) {
        if (p > kRandomPairProbability) {
            tpr.add(p);
            ++positives;
        }
    }
    AccuracyReport r;
    r.tpr = tpr.sum;
    r.tnr = 1.0 - std::ldexp(static_cast<double>(positives), -32);
    r.pruned_mass = dist.pruned_mass();
    finish(r);
    return r;
}

AccuracyReport exact_single_pair_accuracy(const ExtendedDistribution& dist)
{
    KahanSum tpr;
    std::uint64_t positives = 0;
    dist.for_each_coset([&](Word, Word, int dim, double mass) {
        if (std::ldexp(mass, -dim) > kRandomPairProbability) {
            tpr.add(mass);
            positives += std::uint64_t{1} << dim;
        }
    });
    AccuracyReport r;
    r.tpr = tpr.sum;
    r.tnr = 1.0 - std::ldexp(static_cast<double>(positives), -32);
    r.pruned_mass = dist.pruned_mass();
    finish(r);
    return r;
}

AccuracyReport combined_accuracy_mc(const DifferenceOracle& dist, unsigned m, std::uint64_t samples,
                                    std::uint64_t seed, unsigned threads)
{
    if (m == 0 || samples == 0)
        throw std::invalid_argument("combined_accuracy_mc: m and N must be >= 1");
    const unsigned rounds = dist.rounds();
    if (rounds > kFullRounds)
        throw std::invalid_argument("combined_accuracy_mc: at most 32 rounds");
    const StateDiff input = dist.input_diff();

    constexpr std::size_t kChunks = 256;
    struct Tally {
        std::uint64_t pos = 0, neg = 0, true_pos = 0, true_neg = 0;
    };
    std::vector<Tally> tallies(kChunks);
    parallel_chunks(samples, kChunks, threads, [&](std::size_t begin, std::size_t end, std::size_t c) {
        Tally& t = tallies[c];
        for (std::size_t i = begin; i < end; ++i) {
            Rng rng = Rng::substream(seed, i);
            const bool label = rng.coin();
            double z = 0.0;
            for (unsigned j = 0; j < m; ++j) {
                StateDiff x;
                if (label) {
                    const RoundKeys rk = expand_key(rng.master_key(), rounds);
                    const State p0 = rng.state();
                    x = encrypt(p0, rk) ^ encrypt(p0 ^ input, rk);
                } else {
                    x = StateDiff::unpack(static_cast<std::uint32_t>(rng() >> 32));
                }
                const double p = dist.query(x);
                z += p / (p + kRandomPairProbability);
            }
            const bool predicted = z / m > 0.5;
            if (label) {
                ++t.pos;
                t.true_pos += predicted ? 1 : 0;
            } else {
                ++t.neg;
                t.true_neg += predicted ? 0 : 1;
            }
        }
    });

    Tally sum;
    for (const auto& t : tallies) {
        sum.pos += t.pos;
        sum.neg += t.neg;
        sum.true_pos += t.true_pos;
        sum.true_neg += t.true_neg;
    }
    AccuracyReport r;
    r.m = m;
    r.method = AccuracyMethod::MonteCarlo;
    r.sample_count = samples;
    r.tpr = sum.pos ? static_cast<double>(sum.true_pos) / static_cast<double>(sum.pos) : 0.0;
    r.tnr = sum.neg ? static_cast<double>(sum.true_neg) / static_cast<double>(sum.neg) : 0.0;
    r.pruned_mass = dist.pruned_mass();
    r.acc = static_cast<double>(sum.true_pos + sum.true_neg) / static_cast<double>(samples);
    if (r.pruned_mass > kPrunedMassWarning)
        r.warning = "pruned mass " + std::to_string(r.pruned_mass) + " exceeds " + std::to_string(kPrunedMassWarning);
    return r;
}

// ---------------------------------------------------------------------------
// Files

void save_distribution(const SparseDistribution& dist, const std::filesystem::path& path)
{
    io::ChecksumWriter w(path);
    w.magic("SDDT");
    w.u32(kSddtVersion);
    w.u32(dist.rounds());
    w.u32(dist.input_diff().packed());
    w.f64(dist.prune_floor());
    w.f64(dist.pruned_mass());
    w.u64(dist.size());
    const auto keys = dist.keys();
    const auto probs = dist.probs();
    for (std::size_t i = 0; i < keys.size(); ++i) {
        w.u32(keys[i]);
        w.f64(probs[i]);
    }
    w.commit();
}

SparseDistribution load_distribution(const std::filesystem::path& path)
{
    io::ChecksumReader r(path);
    r.expect_magic("SDDT");
    const std::uint32_t version = r.u32();
    if (version != kSddtVersion)
        throw FormatError(path.string() + ": unsupported SDDT version " + std::to_string(version));
    const std::uint32_t rounds = r.u32();
    const StateDiff input = StateDiff::unpack(r.u32());
    const double floor = r.f64();
    const double pruned = r.f64();
    const std::uint64_t count = r.u64();
    if (count > r.remaining() / 12)
        throw FormatError(path.string() + ": entry count exceeds file size");
    std::vector<std::uint32_t> keys(count);
    std::vector<double> probs(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        keys[i] = r.u32();
        probs[i] = r.f64();
        if (!(probs[i] >= 0.0 && probs[i] <= 1.0))
            throw FormatError(path.string() + ": probability out of range");
        if (i > 0 && keys[i - 1] >= keys[i])
            throw FormatError(path.string() + ": entries not strictly increasing");
    }
    r.verify_trailer();
    return SparseDistribution(rounds, input, floor, pruned, std::move(keys), std::move(probs));
}

StateDiff parse_diff(const std::string& text)
{
    const auto colon = text.find(':');
    if (colon == std::string::npos)
        throw std::invalid_argument("difference must look like 0xXXXX:0xYYYY, got '" + text + "'");
    auto word = [&](const std::string& s) -> Word {
        std::size_t used = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(s, &used, 0);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != s.size() || v > 0xFFFF)
            throw std::invalid_argument("bad 16-bit word '" + s + "' in '" + text + "'");
        return static_cast<Word>(v);
    };
    return {word(text.substr(0, colon)), word(text.substr(colon + 1))};
}

std::string format_diff(StateDiff d)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%04X:0x%04X", d.dx, d.dy);
    return buf;
}

}  // namespace simeck
