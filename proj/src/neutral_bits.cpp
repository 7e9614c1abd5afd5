#include "simeck/neutral_bits.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "simeck/diff_model.hpp"
#include "simeck/errors.hpp"
#include "simeck/rng.hpp"

namespace simeck {

namespace {

constexpr std::size_t kTrialsPerBatch = 1 << 14;
constexpr double kMinCollectProbability = 0x1.0p-20;

void check_bits(const std::vector<unsigned>& bits)
{
    for (unsigned b : bits)
        if (b >= 32)
            throw std::invalid_argument("bit index " + std::to_string(b) + " is outside 0..31");
}

std::vector<std::vector<unsigned>> subsets_minus_one(const std::vector<unsigned>& s)
{
    std::vector<std::vector<unsigned>> out;
    for (std::size_t skip = 0; skip < s.size(); ++skip) {
        std::vector<unsigned> t;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (i != skip)
                t.push_back(s[i]);
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

double differential_probability(const Differential& d)
{
    if (d.rounds == 0)
        return d.input_diff == d.output_diff ? 1.0 : 0.0;
    PropagateOptions o;
    if (d.rounds <= 4)
        return make_difference_table(d.input_diff, d.rounds, 3, o)->query(d.output_diff);
    // Longer differentials only need a lower bound against the collection limit.
    o.prune_floor = 0x1.0p-30;
    return make_difference_table(d.input_diff, d.rounds, d.rounds - 1, o)->query(d.output_diff);
}

std::string to_string(BitConvention c)
{
    return c == BitConvention::XY ? "xy" : "yx";
}

BitConvention parse_convention(const std::string& s)
{
    if (s == "xy")
        return BitConvention::XY;
    if (s == "yx")
        return BitConvention::YX;
    throw std::invalid_argument("bit convention must be 'xy' or 'yx', got '" + s + "'");
}

StateDiff flip_mask(const std::vector<unsigned>& bits, BitConvention c)
{
    check_bits(bits);
    std::uint32_t packed = 0;
    for (unsigned b : bits)
        packed ^= 1U << b;
    if (c == BitConvention::XY)
        return StateDiff::unpack(packed);
    return {static_cast<Word>(packed), static_cast<Word>(packed >> 16)};
}

bool bit_value(State s, unsigned bit, BitConvention c)
{
    const StateDiff m = flip_mask({bit}, c);
    return ((s.x & m.dx) | (s.y & m.dy)) != 0;
}

unsigned left_word_bit(unsigned i, BitConvention c)
{
    if (i >= 16)
        throw std::invalid_argument("left-word bit index must be below 16");
    return c == BitConvention::XY ? i + 16 : i;
}

bool conforms(const Differential& d, State p, const RoundKeys& keys) noexcept
{
    State a = p, b = p ^ d.input_diff;
    for (unsigned i = 0; i < d.rounds; ++i) {
        a = round_forward(a, keys[i]);
        b = round_forward(b, keys[i]);
    }
    return (a ^ b) == d.output_diff;
}

std::vector<ConformingPair> collect_conforming_pairs(const Differential& d, std::size_t count, std::uint64_t seed,
                                                     const CollectOptions& opt)
{
    const double p = differential_probability(d);
    if (p < kMinCollectProbability)
        throw std::invalid_argument("differential probability 2^" + std::to_string(std::log2(p)) +
                                    " is below 2^-20; collecting conforming pairs is impractical");
    const auto deadline = std::chrono::steady_clock::now() + opt.timeout;
    const unsigned threads = std::max(1U, opt.threads);

    std::vector<ConformingPair> out;
    std::uint64_t next_batch = 0;
    while (out.size() < count) {
        if (std::chrono::steady_clock::now() > deadline)
            throw ResourceError("collecting conforming pairs timed out after " + std::to_string(out.size()) + " of " +
                                std::to_string(count) + " pairs");
        // A wave of batches; results are appended in batch order, so the
        // output does not depend on the thread count.
        const std::size_t expected_per_batch = std::max(1.0, p * kTrialsPerBatch);
        const std::size_t missing = count - out.size();
        const std::size_t wave =
            std::clamp<std::size_t>((missing + expected_per_batch - 1) / expected_per_batch, 1, 4 * threads);
        std::vector<std::vector<ConformingPair>> found(wave);
        parallel_for(wave, threads, [&](std::size_t w) {
            Rng rng = Rng::substream(seed, next_batch + w);
            for (std::size_t t = 0; t < kTrialsPerBatch; ++t) {
                const RoundKeys keys = expand_key(rng.master_key(), d.rounds);
                const State s = rng.state();
                if (conforms(d, s, keys))
                    found[w].push_back({s, keys});
            }
        });
        next_batch += wave;
        for (auto& f : found)
            for (auto& cp : f)
                if (out.size() < count)
                    out.push_back(cp);
    }
    return out;
}

double neutrality(const std::vector<unsigned>& bits, const Differential& d, const std::vector<ConformingPair>& pairs,
                  BitConvention c)
{
    if (pairs.empty())
        throw std::invalid_argument("neutrality: empty pair list");
    const StateDiff mask = flip_mask(bits, c);
    std::size_t kept = 0;
    for (const auto& cp : pairs)
        kept += conforms(d, cp.p ^ mask, cp.keys);
    return static_cast<double>(kept) / static_cast<double>(pairs.size());
}

NeutralBitSet measure_conditional(const std::vector<unsigned>& bits, const std::vector<BitCondition>& cond,
                                  const Differential& d, const std::vector<ConformingPair>& pairs, BitConvention c)
{
    for (const auto& k : cond)
        if (std::find(bits.begin(), bits.end(), k.bit) != bits.end())
            throw std::invalid_argument("condition bit " + std::to_string(k.bit) + " is also flipped");
    std::vector<ConformingPair> subset;
    for (const auto& cp : pairs) {
        bool ok = true;
        for (const auto& k : cond)
            ok = ok && bit_value(cp.p, k.bit, c) == k.value;
        if (ok)
            subset.push_back(cp);
    }
    NeutralBitSet s;
    s.bits = bits;
    s.condition = cond;
    s.pair_count = subset.size();
    s.insufficient = subset.size() < kMinPartitionPairs;
    if (!subset.empty())
        s.neutrality = neutrality(bits, d, subset, c);
    if (!pairs.empty())
        s.unconditional = neutrality(bits, d, pairs, c);
    return s;
}

std::vector<NeutralBitSet> search_neutral_bits(const Differential& d, unsigned max_set_size,
                                               const std::vector<ConformingPair>& pairs, double threshold,
                                               BitConvention c, unsigned threads)
{
    if (max_set_size == 0 || max_set_size > 3)
        throw std::invalid_argument("search_neutral_bits: max_set_size must be 1, 2 or 3");
    if (pairs.empty())
        throw std::invalid_argument("search_neutral_bits: no conforming pairs");

    std::map<std::vector<unsigned>, double> measured;
    std::vector<NeutralBitSet> out;
    auto neutral = [&](const std::vector<unsigned>& s) {
        auto it = measured.find(s);
        return it != measured.end() && it->second >= threshold;
    };

    std::vector<std::vector<unsigned>> level;
    for (unsigned b = 0; b < 32; ++b)
        level.push_back({b});
    for (unsigned size = 1; size <= max_set_size; ++size) {
        if (size > 1) {
            level.clear();
            std::vector<unsigned> s(size);
            auto rec = [&](auto&& self, unsigned start, unsigned depth) -> void {
                if (depth == size) {
                    for (const auto& sub : subsets_minus_one(s))
                        if (neutral(sub))
                            return;
                    // skip sets containing a neutral single bit or pair deeper down
                    for (unsigned b : s)
                        if (neutral({b}))
                            return;
                    level.push_back(s);
                    return;
                }
                for (unsigned b = start; b < 32; ++b) {
                    s[depth] = b;
                    self(self, b + 1, depth + 1);
                }
            };
            rec(rec, 0, 0);
        }
        std::vector<double> values(level.size());
        parallel_for(level.size(), threads, [&](std::size_t i) { values[i] = neutrality(level[i], d, pairs, c); });
        for (std::size_t i = 0; i < level.size(); ++i) {
            measured[level[i]] = values[i];
            if (values[i] >= threshold)
                out.push_back({level[i], values[i], {}, pairs.size(), false, std::nullopt});
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const NeutralBitSet& a, const NeutralBitSet& b) {
        if (a.neutrality != b.neutrality)
            return a.neutrality > b.neutrality;
        if (a.bits.size() != b.bits.size())
            return a.bits.size() < b.bits.size();
        return a.bits < b.bits;
    });
    return out;
}

std::vector<NeutralBitSet> search_csnbs(const Differential& d, const std::vector<std::vector<unsigned>>& candidates,
                                        const std::vector<unsigned>& condition_bits,
                                        const std::vector<ConformingPair>& pairs, double threshold, BitConvention c)
{
    check_bits(condition_bits);
    if (condition_bits.size() > 8)
        throw std::invalid_argument("search_csnbs: at most 8 condition bits");
    if (pairs.empty())
        throw std::invalid_argument("search_csnbs: no conforming pairs");
    std::vector<NeutralBitSet> out;
    const unsigned partitions = 1U << condition_bits.size();
    for (unsigned v = 0; v < partitions; ++v) {
        // the first listed condition bit is the most significant, as in "x[i,j] = 10"
        std::vector<BitCondition> cond;
        for (std::size_t i = 0; i < condition_bits.size(); ++i)
            cond.push_back({condition_bits[i], ((v >> (condition_bits.size() - 1 - i)) & 1) != 0});
        bool reported_insufficient = false;
        for (const auto& bits : candidates) {
            const bool overlaps = std::any_of(bits.begin(), bits.end(), [&](unsigned b) {
                return std::find(condition_bits.begin(), condition_bits.end(), b) != condition_bits.end();
            });
            if (overlaps)
                continue;
            auto s = measure_conditional(bits, cond, d, pairs, c);
            if (s.insufficient) {
                if (!reported_insufficient) {
                    s.bits.clear();
                    s.neutrality = 0;
                    s.unconditional.reset();
                    out.push_back(std::move(s));
                    reported_insufficient = true;
                }
                continue;
            }
            if (s.neutrality >= threshold)
                out.push_back(std::move(s));
        }
    }
    return out;
}

std::vector<std::vector<unsigned>> reference_neutral_sets_3r()
{
    return {{3}, {4}, {5}, {7}, {8}, {9}, {13}, {14}, {15}, {18}, {20}, {22}, {24}, {30}, {0, 31}, {10, 25}};
}

Differential reference_differential_3r()
{
    return {{0x0140, 0x0200}, {0x0000, 0x0040}, 3};
}

Differential reference_differential_4r()
{
    return {{0x0300, 0x0440}, {0x0000, 0x0040}, 4};
}

Calibration calibrate_convention(const std::vector<ConformingPair>& pairs_3r)
{
    const auto d = reference_differential_3r();
    auto worst = [&](BitConvention c) {
        double w = 1.0;
        for (const auto& s : reference_neutral_sets_3r())
            w = std::min(w, neutrality(s, d, pairs_3r, c));
        return w;
    };
    const double xy = worst(BitConvention::XY);
    const double yx = worst(BitConvention::YX);
    if (xy >= 0.98 || xy >= yx)
        return {BitConvention::XY, xy, yx};
    return {BitConvention::YX, yx, xy};
}

std::string to_json_line(const NeutralBitSet& s, BitConvention c, std::uint64_t seed)
{
    nlohmann::json j;
    j["bits"] = s.bits;
    j["neutrality"] = s.neutrality;
    auto cond = nlohmann::json::array();
    for (const auto& k : s.condition)
        cond.push_back({k.bit, k.value ? 1 : 0});
    j["condition"] = cond;
    j["convention"] = to_string(c);
    j["pair_count"] = s.pair_count;
    j["seed"] = seed;
    if (s.insufficient)
        j["insufficient"] = true;
    if (s.unconditional)
        j["unconditional"] = *s.unconditional;
    return j.dump();
}

}  // namespace simeck
