#include "simeck/data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "simeck/binary_io.hpp"
#include "simeck/errors.hpp"
#include "simeck/rng.hpp"

namespace simeck {

namespace {

constexpr std::uint32_t kSdnsVersion = 1;

}  // namespace

std::size_t Dataset::positives() const noexcept
{
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

std::vector<CipherPair> Dataset::pairs(std::size_t i) const
{
    std::vector<CipherPair> out(m);
    for (unsigned j = 0; j < m; ++j)
        out[j] = pair(i, j);
    return out;
}

Dataset generate_dataset(const DatasetSpec& spec, unsigned threads)
{
    if (spec.m == 0 || spec.rounds == 0 || spec.rounds > kFullRounds)
        throw std::invalid_argument("generate_dataset: need m >= 1 and 1 <= rounds <= 32");
    if (!(spec.positive_fraction >= 0.0 && spec.positive_fraction <= 1.0))
        throw std::invalid_argument("generate_dataset: positive_fraction must lie in [0, 1]");

    Dataset d;
    d.rounds = spec.rounds;
    d.m = spec.m;
    d.input_diff = spec.input_diff;
    d.seed = spec.seed;

    const auto count = static_cast<std::size_t>(spec.count);
    const auto positives = static_cast<std::size_t>(std::llround(spec.positive_fraction * static_cast<double>(count)));
    d.labels.assign(count, 0);
    std::fill_n(d.labels.begin(), positives, std::uint8_t{1});
    Rng label_rng = Rng::substream(spec.seed, 0);
    for (std::size_t i = count; i > 1; --i)
        std::swap(d.labels[i - 1], d.labels[label_rng.below(i)]);

    d.words.resize(count * spec.m * kFeatureWords);
    parallel_for(count, threads, [&](std::size_t i) {
        Rng rng = Rng::substream(spec.seed, i + 1);
        const RoundKeys rk = expand_key(rng.master_key(), spec.rounds);
        for (unsigned j = 0; j < spec.m; ++j) {
            const State p0 = rng.state();
            const State p1 = d.labels[i] ? p0 ^ spec.input_diff : rng.state();
            const FeatureBlock f = derive_features({encrypt(p0, rk), encrypt(p1, rk)});
            std::copy(f.begin(), f.end(), d.words.begin() + static_cast<std::ptrdiff_t>((i * spec.m + j) * kFeatureWords));
        }
    });
    return d;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path)
{
    io::ChecksumWriter w(path);
    w.magic("SDNS");
    w.u32(kSdnsVersion);
    w.u32(data.rounds);
    w.u32(data.m);
    w.u32(data.input_diff.packed());
    w.u64(data.size());
    w.u64(data.seed);
    const std::size_t stride = std::size_t{data.m} * kFeatureWords;
    for (std::size_t i = 0; i < data.size(); ++i) {
        w.u8(data.labels[i]);
        for (std::size_t k = 0; k < stride; ++k)
            w.u16(data.words[i * stride + k]);
    }
    w.commit();
}

Dataset load_dataset(const std::filesystem::path& path, const DatasetExpectation& expect)
{
    io::ChecksumReader r(path);
    r.expect_magic("SDNS");
    if (const auto v = r.u32(); v != kSdnsVersion)
        throw FormatError(path.string() + ": unsupported SDNS version " + std::to_string(v));
    Dataset d;
    d.rounds = r.u32();
    d.m = r.u32();
    d.input_diff = StateDiff::unpack(r.u32());
    const std::uint64_t count = r.u64();
    d.seed = r.u64();
    if (expect.rounds && *expect.rounds != d.rounds)
        throw FormatError(path.string() + ": dataset has " + std::to_string(d.rounds) + " rounds, expected " +
                          std::to_string(*expect.rounds));
    if (expect.m && *expect.m != d.m)
        throw FormatError(path.string() + ": dataset has m=" + std::to_string(d.m) + ", expected m=" +
                          std::to_string(*expect.m));
    if (d.m == 0)
        throw FormatError(path.string() + ": m must be >= 1");
    const std::uint64_t stride = std::uint64_t{d.m} * kFeatureWords;
    const std::uint64_t per_sample = 1 + 2 * stride;
    if (r.remaining() < 4 || count > (r.remaining() - 4) / per_sample || r.remaining() != count * per_sample + 4)
        throw FormatError(path.string() + ": sample count does not match file size");
    d.labels.resize(count);
    d.words.resize(count * stride);
    for (std::uint64_t i = 0; i < count; ++i) {
        d.labels[i] = r.u8();
        if (d.labels[i] > 1)
            throw FormatError(path.string() + ": label must be 0 or 1");
        for (std::uint64_t k = 0; k < stride; ++k)
            d.words[i * stride + k] = r.u16();
    }
    r.verify_trailer();
    return d;
}

}  // namespace simeck
