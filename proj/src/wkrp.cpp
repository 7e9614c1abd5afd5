#include "simeck/wkrp.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "simeck/binary_io.hpp"
#include "simeck/errors.hpp"
#include "simeck/rng.hpp"

namespace simeck {

namespace {

constexpr std::uint32_t kProfileVersion = 1;

unsigned effective_m(const Distinguisher& d, const ProfileConfig& cfg)
{
    if (cfg.m != 0) {
        if (d.native_pairs() != 0 && d.native_pairs() != cfg.m)
            throw std::invalid_argument("profile: m=" + std::to_string(cfg.m) + " does not fit distinguisher " + d.id());
        return cfg.m;
    }
    return d.native_pairs() != 0 ? d.native_pairs() : 8;
}

}  // namespace

ProfileEntry profile_entry(const Distinguisher& d, Word delta, const ProfileConfig& cfg)
{
    if (cfg.n_keys < 2)
        throw std::invalid_argument("profile: n_keys must be at least 2");
    const unsigned m = effective_m(d, cfg);
    const unsigned rounds = d.rounds() + 1;
    const Word applied = static_cast<Word>(delta ^ cfg.key_offset);

    Rng rng = Rng::substream(cfg.seed, applied);
    std::vector<CipherPair> pairs;
    pairs.reserve(std::size_t{cfg.n_keys} * m);
    for (unsigned t = 0; t < cfg.n_keys; ++t) {
        const RoundKeys rk = expand_key(rng.master_key(), rounds);
        const Word guess = static_cast<Word>(rk.back() ^ applied);
        for (unsigned j = 0; j < m; ++j) {
            const State p = rng.state();
            pairs.push_back({round_backward(encrypt(p, rk), guess),
                             round_backward(encrypt(p ^ cfg.input_diff, rk), guess)});
        }
    }
    std::vector<double> scores(cfg.n_keys);
    d.score_batch(pairs, m, scores);

    double mean = 0;
    for (double s : scores)
        mean += s;
    mean /= cfg.n_keys;
    double var = 0;
    for (double s : scores)
        var += (s - mean) * (s - mean);
    return {mean, std::sqrt(var / cfg.n_keys)};
}

std::vector<ProfileEntry> profile_entries(const Distinguisher& d, const std::vector<Word>& deltas,
                                          const ProfileConfig& cfg)
{
    std::vector<ProfileEntry> out(deltas.size());
    std::atomic<std::size_t> done{0};
    parallel_for(deltas.size(), cfg.threads, [&](std::size_t i) {
        out[i] = profile_entry(d, deltas[i], cfg);
        const std::size_t n = ++done;
        if (cfg.on_progress && n % 1024 == 0)
            cfg.on_progress(n, deltas.size());
    });
    return out;
}

WrongKeyProfile compute_profile(const Distinguisher& d, const ProfileConfig& cfg)
{
    std::vector<Word> deltas(kProfileSize);
    for (std::size_t i = 0; i < kProfileSize; ++i)
        deltas[i] = static_cast<Word>(i);
    const auto entries = profile_entries(d, deltas, cfg);
    WrongKeyProfile p;
    p.rounds = d.rounds();
    p.m = effective_m(d, cfg);
    p.n_keys = cfg.n_keys;
    p.distinguisher_id = d.id();
    for (std::size_t i = 0; i < kProfileSize; ++i) {
        p.mu[i] = entries[i].mu;
        p.sigma[i] = entries[i].sigma;
    }
    return p;
}

void save_profile(const WrongKeyProfile& p, const std::filesystem::path& path)
{
    if (p.mu.size() != kProfileSize || p.sigma.size() != kProfileSize)
        throw std::invalid_argument("save_profile: profile must have 65536 entries");
    io::ChecksumWriter w(path);
    w.magic("SWKR");
    w.u32(kProfileVersion);
    w.u32(p.rounds);
    w.u32(p.m);
    w.u32(p.n_keys);
    w.string(p.distinguisher_id);
    for (std::size_t i = 0; i < kProfileSize; ++i) {
        w.f64(p.mu[i]);
        w.f64(p.sigma[i]);
    }
    w.commit();
}

WrongKeyProfile load_profile(const std::filesystem::path& path)
{
    io::ChecksumReader r(path);
    r.expect_magic("SWKR");
    if (const auto v = r.u32(); v != kProfileVersion)
        throw FormatError(path.string() + ": unsupported SWKR version " + std::to_string(v));
    WrongKeyProfile p;
    p.rounds = r.u32();
    p.m = r.u32();
    p.n_keys = r.u32();
    p.distinguisher_id = r.string();
    if (r.remaining() != kProfileSize * 16 + 4)
        throw FormatError(path.string() + ": profile does not hold exactly 65536 entries");
    for (std::size_t i = 0; i < kProfileSize; ++i) {
        p.mu[i] = r.f64();
        p.sigma[i] = r.f64();
        if (!(p.sigma[i] >= 0))
            throw FormatError(path.string() + ": negative or NaN sigma at delta " + std::to_string(i));
    }
    r.verify_trailer();
    return p;
}

void export_profile_csv(const WrongKeyProfile& p, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out.precision(17);
    out << "delta,mu,sigma\n";
    for (std::size_t i = 0; i < kProfileSize; ++i)
        out << i << ',' << p.mu[i] << ',' << p.sigma[i] << '\n';
    if (!out)
        throw std::runtime_error("write failed: " + path.string());
}

}  // namespace simeck
