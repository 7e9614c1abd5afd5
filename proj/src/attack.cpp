#include "simeck/attack.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace simeck {

namespace {

using Clock = std::chrono::steady_clock;

std::vector<Word> two_bit_neighbours(Word k)
{
    std::vector<Word> out;
    out.reserve(136);
    for (unsigned i = 0; i < 16; ++i) {
        out.push_back(static_cast<Word>(k ^ (1U << i)));
        for (unsigned j = i + 1; j < 16; ++j)
            out.push_back(static_cast<Word>(k ^ (1U << i) ^ (1U << j)));
    }
    return out;
}

StateDiff combined_mask(const std::vector<std::vector<unsigned>>& sets, std::uint64_t selector, BitConvention c)
{
    StateDiff m{0, 0};
    for (std::size_t b = 0; b < sets.size(); ++b)
        if ((selector >> b) & 1) {
            const StateDiff f = flip_mask(sets[b], c);
            m = {static_cast<Word>(m.dx ^ f.dx), static_cast<Word>(m.dy ^ f.dy)};
        }
    return m;
}

}  // namespace

double combined_term(double v) noexcept
{
    v = std::clamp(v, kScoreClamp, 1.0 - kScoreClamp);
    return std::log2(v / (1.0 - v));
}

std::vector<CipherPair> peel(std::span<const CipherPair> pairs, Word key)
{
    std::vector<CipherPair> out(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i)
        out[i] = {round_backward(pairs[i].c, key), round_backward(pairs[i].c_prime, key)};
    return out;
}

KeyEvaluation evaluate_key(std::span<const CipherPair> pairs, unsigned m, Word key, const Distinguisher& d)
{
    if (m == 0 || pairs.size() % m != 0)
        throw std::invalid_argument("evaluate_key: pair count is not a multiple of m");
    const auto peeled = peel(pairs, key);
    std::vector<double> v(pairs.size() / m);
    d.score_batch(peeled, m, v);
    KeyEvaluation e;
    for (double x : v) {
        e.score += combined_term(x);
        e.mean += x;
    }
    e.mean /= static_cast<double>(v.size());
    return e;
}

std::vector<ScoredKey> bayesian_key_search(std::span<const CipherPair> pairs, unsigned m, const Distinguisher& d,
                                           const WrongKeyProfile& profile, unsigned n_cand, unsigned n_byit, Rng& rng,
                                           unsigned threads)
{
    if (n_cand == 0 || n_cand > 16384)
        throw std::invalid_argument("bayesian_key_search: n_cand must lie in 1..16384");
    if (profile.mu.size() != kProfileSize || profile.sigma.size() != kProfileSize)
        throw std::invalid_argument("bayesian_key_search: malformed profile");

    // initial candidates without replacement, then masked
    std::vector<Word> cand;
    {
        std::unordered_set<Word> seen;
        while (cand.size() < n_cand) {
            const Word k = rng.word();
            if (seen.insert(k).second)
                cand.push_back(k);
        }
        for (auto& k : cand)
            k &= kRankMask;
    }

    std::vector<double> inv_var(kProfileSize);
    for (std::size_t i = 0; i < kProfileSize; ++i) {
        const double s = std::max(profile.sigma[i], kSigmaFloor);
        inv_var[i] = 1.0 / (s * s);
    }
    std::vector<Word> ranked;
    for (std::uint32_t k = 0; k < kProfileSize; ++k)
        if ((k & ~std::uint32_t{kRankMask}) == 0)
            ranked.push_back(static_cast<Word>(k));

    std::vector<ScoredKey> out;
    out.reserve(std::size_t{n_byit} * n_cand);
    std::vector<KeyEvaluation> eval(n_cand);
    std::vector<double> lambda(ranked.size());
    std::vector<std::size_t> order(ranked.size());
    for (unsigned t = 0; t < n_byit; ++t) {
        parallel_for(n_cand, threads, [&](std::size_t i) { eval[i] = evaluate_key(pairs, m, cand[i], d); });
        for (unsigned i = 0; i < n_cand; ++i)
            out.push_back({cand[i], eval[i].score});

        parallel_for(ranked.size(), threads, [&](std::size_t idx) {
            const Word k = ranked[idx];
            double l = 0;
            for (unsigned i = 0; i < n_cand; ++i) {
                const Word w = static_cast<Word>(cand[i] ^ k);
                const double diff = eval[i].mean - profile.mu[w];
                l += diff * diff * inv_var[w];
            }
            lambda[idx] = l;
        });
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::partial_sort(order.begin(), order.begin() + n_cand, order.end(), [&](std::size_t a, std::size_t b) {
            return lambda[a] < lambda[b] || (lambda[a] == lambda[b] && a < b);
        });
        for (unsigned i = 0; i < n_cand; ++i)
            cand[i] = static_cast<Word>(ranked[order[i]] ^ (rng.below(4) << 12));
    }
    return out;
}

double ucb_priority(double w_max, unsigned n_visit, std::uint64_t j, unsigned n_cts)
{
    if (n_visit == 0)
        return std::numeric_limits<double>::infinity();
    if (j == 0)
        throw std::invalid_argument("ucb_priority: iterations count from 1");
    return w_max + std::sqrt(static_cast<double>(n_cts)) *
                       std::sqrt(std::log2(static_cast<double>(j)) / static_cast<double>(n_visit));
}

VerifierResult verifier_search(KeyPair start, std::span<const CipherPair> pairs, unsigned m, const Distinguisher& d_r,
                               const Distinguisher& d_r1, unsigned threads)
{
    VerifierResult res;
    res.keys = start;
    auto score1 = [&](Word k1) { return evaluate_key(pairs, m, k1, d_r).score; };
    std::vector<CipherPair> once = peel(pairs, res.keys.k1);
    auto score2 = [&](Word k2) { return evaluate_key(once, m, k2, d_r1).score; };

    // Steepest step among <= 2-bit neighbours; returns true if it moved.
    auto climb = [&](int which, Word& key, double& current, auto&& score) {
        const auto nb = two_bit_neighbours(key);
        std::vector<double> s(nb.size());
        parallel_for(nb.size(), threads, [&](std::size_t i) { s[i] = score(nb[i]); });
        const auto best = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
        if (!(s[best] > current))
            return false;
        res.steps.push_back({which, key, nb[best], current, s[best]});
        key = nb[best];
        current = s[best];
        return true;
    };

    double s1 = score1(res.keys.k1);
    double s2 = score2(res.keys.k2);
    for (;;) {
        bool moved = false;
        if (climb(1, res.keys.k1, s1, score1)) {
            moved = true;
            once = peel(pairs, res.keys.k1);
            s2 = score2(res.keys.k2);
        }
        if (climb(2, res.keys.k2, s2, score2))
            moved = true;
        if (!moved)
            break;
    }
    res.score = s2;
    return res;
}

bool key_guess_success(KeyPair guess, KeyPair truth) noexcept
{
    return std::popcount(static_cast<unsigned>(guess.k1 ^ truth.k1)) +
               std::popcount(static_cast<unsigned>(guess.k2 ^ truth.k2)) <=
           2;
}

void AttackConfig::validate() const
{
    auto fail = [](const std::string& msg) { throw std::invalid_argument("attack config: " + msg); };
    if (s != cd.rounds)
        fail("s=" + std::to_string(s) + " does not match the differential's " + std::to_string(cd.rounds) + " rounds");
    if (r < 2)
        fail("r must be at least 2");
    if (total_rounds() > kFullRounds)
        fail("1+s+r+1 exceeds 32 rounds");
    if (m_bits.size() > 10)
        fail("too many m-generating neutral bits");
    if (n_b != (1U << structure_bits.size()))
        fail("n_b=" + std::to_string(n_b) + " must equal 2^|structure_bits| = " +
             std::to_string(1U << structure_bits.size()));
    if (n_cts == 0 || n_it == 0 || trials == 0)
        fail("n_cts, n_it and trials must be positive");
    if (n_cand1 == 0 || n_cand2 == 0 || n_byit1 == 0 || n_byit2 == 0)
        fail("n_cand and n_byit must be positive");
    if (n_cand1 > 16384 || n_cand2 > 16384)
        fail("n_cand exceeds the 16384 masked keys");
    for (const auto* sets : {&m_bits, &structure_bits})
        for (const auto& set : *sets) {
            if (set.empty())
                fail("empty neutral bit-set");
            for (unsigned b : set)
                if (b >= 32)
                    fail("neutral bit " + std::to_string(b) + " outside 0..31");
        }
    if (!std::isfinite(c1) || !std::isfinite(c2))
        fail("cutoffs must be finite");
}

std::vector<std::pair<State, State>> structure_plaintexts(const AttackConfig& cfg, State base)
{
    const unsigned m = cfg.m();
    std::vector<std::pair<State, State>> out;
    out.reserve(std::size_t{cfg.n_b} * m);
    for (unsigned j = 0; j < cfg.n_b; ++j) {
        const StateDiff sm = combined_mask(cfg.structure_bits, j, cfg.convention);
        for (unsigned i = 0; i < m; ++i) {
            const StateDiff mm = combined_mask(cfg.m_bits, i, cfg.convention);
            const State s0 = base ^ sm ^ mm;
            const State s1 = s0 ^ cfg.cd.input_diff;
            out.emplace_back(round_backward(s0, 0), round_backward(s1, 0));
        }
    }
    return out;
}

std::vector<CiphertextStructure> build_structures(const AttackConfig& cfg, const RoundKeys& keys, Rng& rng)
{
    if (keys.size() != cfg.total_rounds())
        throw std::invalid_argument("build_structures: key schedule length does not match 1+s+r+1");
    std::vector<CiphertextStructure> out(cfg.n_cts);
    for (auto& st : out) {
        const State base = rng.state();
        const auto pts = structure_plaintexts(cfg, base);
        st.n_b = cfg.n_b;
        st.m = cfg.m();
        st.pairs.reserve(pts.size());
        for (const auto& [p0, p1] : pts)
            st.pairs.push_back({encrypt(p0, keys), encrypt(p1, keys)});
        // does the base pair follow the CD under the real keys?
        State a = round_forward(pts.front().first, keys[0]);
        State b = round_forward(pts.front().second, keys[0]);
        for (unsigned i = 1; i <= cfg.s; ++i) {
            a = round_forward(a, keys[i]);
            b = round_forward(b, keys[i]);
        }
        st.conforms = (a ^ b) == cfg.cd.output_diff;
    }
    return out;
}

AttackResult run_attack(const AttackConfig& cfg, const AttackComponents& comp, std::uint64_t trial, unsigned threads)
{
    cfg.validate();
    if (!comp.d_r || !comp.d_r1 || !comp.profile_r || !comp.profile_r1)
        throw std::invalid_argument("run_attack: missing distinguisher or profile");
    if (comp.d_r->rounds() != cfg.r || comp.d_r1->rounds() + 1 != cfg.r)
        throw std::invalid_argument("run_attack: distinguishers must target r and r-1 rounds");
    if (comp.profile_r->rounds != cfg.r || comp.profile_r1->rounds + 1 != cfg.r)
        throw std::invalid_argument("run_attack: profiles must be for r and r-1 rounds");
    if (comp.profile_r->distinguisher_id != comp.d_r->id() || comp.profile_r1->distinguisher_id != comp.d_r1->id())
        throw std::invalid_argument("run_attack: profile was computed for a different distinguisher");

    const auto t0 = Clock::now();
    AttackResult res;
    res.trial = trial;
    res.seed = cfg.seed;
    Rng rng = Rng::substream(cfg.seed, trial);
    const RoundKeys keys = expand_key(rng.master_key(), cfg.total_rounds());
    res.truth = {keys[keys.size() - 1], keys[keys.size() - 2]};
    auto structures = build_structures(cfg, keys, rng);
    res.conforming_structure = std::any_of(structures.begin(), structures.end(), [](auto& s) { return s.conforms; });

    const unsigned m = cfg.m();
    double best_score = -std::numeric_limits<double>::infinity();
    KeyPair best_key;
    std::size_t best_pos = 0;
    bool found = false;

    unsigned j = 1;
    for (; j <= cfg.n_it; ++j) {
        std::size_t idx = 0;
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < structures.size(); ++i) {
            const double p = ucb_priority(structures[i].w_max, structures[i].n_visit, j, cfg.n_cts);
            if (p > top || (i == 0 && p == top)) {
                top = p;
                idx = i;
            }
        }
        auto& st = structures[idx];
        ++st.n_visit;

        const auto l1 = bayesian_key_search(st.pairs, m, *comp.d_r, *comp.profile_r, cfg.n_cand1, cfg.n_byit1, rng,
                                            threads);
        for (const auto& e : l1)
            st.w_max = std::max(st.w_max, e.score);

        // each distinct last-subkey guess above c1 gets one second-level search
        std::unordered_set<Word> done;
        for (const auto& g1 : l1) {
            if (!(g1.score > cfg.c1) || !done.insert(g1.key).second)
                continue;
            const auto peeled = peel(st.pairs, g1.key);
            const auto l2 = bayesian_key_search(peeled, m, *comp.d_r1, *comp.profile_r1, cfg.n_cand2, cfg.n_byit2,
                                                rng, threads);
            const auto it = std::max_element(l2.begin(), l2.end(),
                                             [](const ScoredKey& a, const ScoredKey& b) { return a.score < b.score; });
            if (it->score > best_score) {
                best_score = it->score;
                best_key = {g1.key, it->key};
                best_pos = idx;
                found = true;
            }
        }
        if (best_score > cfg.c2)
            break;
    }
    res.iterations = std::min(j, cfg.n_it);
    res.structures_used = static_cast<unsigned>(
        std::count_if(structures.begin(), structures.end(), [](auto& s) { return s.n_visit > 0; }));
    res.actual_data = static_cast<double>(res.structures_used) * cfg.n_b * m * 2;
    res.found = found;
    if (found) {
        const auto v = verifier_search(best_key, structures[best_pos].pairs, m, *comp.d_r, *comp.d_r1, threads);
        res.recovered = v.keys;
        res.best_score = v.score;
        res.success = key_guess_success(v.keys, res.truth);
    }
    res.rt_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return res;
}

std::vector<AttackResult> run_trials(const AttackConfig& cfg, const AttackComponents& comp, unsigned threads,
                                     const std::function<void(const AttackResult&)>& on_result)
{
    cfg.validate();
    std::vector<AttackResult> out(cfg.trials);
    std::mutex mu;
    threads = std::max(1U, threads);
    const unsigned outer = std::min(threads, cfg.trials);
    const unsigned inner = std::max(1U, threads / outer);
    parallel_chunks(cfg.trials, cfg.trials, outer, [&](std::size_t b, std::size_t e, std::size_t) {
        for (std::size_t t = b; t < e; ++t) {
            out[t] = run_attack(cfg, comp, t, inner);
            if (on_result) {
                std::lock_guard lock(mu);
                on_result(out[t]);
            }
        }
    });
    return out;
}

std::string to_json_line(const AttackResult& r)
{
    nlohmann::json j;
    j["trial"] = r.trial;
    j["seed"] = r.seed;
    j["success"] = r.success;
    j["found"] = r.found;
    j["rt_seconds"] = r.rt_seconds;
    j["iterations"] = r.iterations;
    j["structures_used"] = r.structures_used;
    j["recovered_keys"] = {r.recovered.k1, r.recovered.k2};
    j["true_keys"] = {r.truth.k1, r.truth.k2};
    j["best_score"] = std::isfinite(r.best_score) ? nlohmann::json(r.best_score) : nlohmann::json(nullptr);
    j["actual_data"] = r.actual_data;
    j["conforming_structure"] = r.conforming_structure;
    return j.dump();
}

AttackResult attack_result_from_json(const std::string& line)
{
    const auto j = nlohmann::json::parse(line);
    AttackResult r;
    r.trial = j.at("trial").get<std::uint64_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.success = j.at("success").get<bool>();
    r.found = j.value("found", r.success);
    r.rt_seconds = j.at("rt_seconds").get<double>();
    r.iterations = j.at("iterations").get<unsigned>();
    r.structures_used = j.at("structures_used").get<unsigned>();
    const auto rk = j.at("recovered_keys");
    r.recovered = {rk.at(0).get<Word>(), rk.at(1).get<Word>()};
    if (j.contains("true_keys")) {
        const auto tk = j.at("true_keys");
        r.truth = {tk.at(0).get<Word>(), tk.at(1).get<Word>()};
    }
    if (j.contains("best_score") && !j["best_score"].is_null())
        r.best_score = j["best_score"].get<double>();
    r.actual_data = j.value("actual_data", 0.0);
    r.conforming_structure = j.value("conforming_structure", false);
    return r;
}

double log2_theoretical_data(unsigned m, std::uint64_t n_b, std::uint64_t n_cts)
{
    return std::log2(static_cast<double>(m)) + std::log2(static_cast<double>(n_b)) +
           std::log2(static_cast<double>(n_cts)) + 1.0;
}

double log2_time_complexity(double log2_rate, double rt_seconds, double sr)
{
    if (!(sr > 0.0) || sr > 1.0)
        throw std::domain_error("no success; complexity undefined");
    double t = log2_rate + std::log2(rt_seconds);
    if (sr < 1.0)
        t += std::log2(std::log(0.01) / std::log(1.0 - sr));
    return t;
}

ComplexityReport complexity_report(const std::vector<AttackResult>& results, const AttackConfig& cfg,
                                   double decryptions_per_second)
{
    if (results.empty())
        throw std::invalid_argument("complexity_report: no trials");
    if (!(decryptions_per_second > 0))
        throw std::invalid_argument("complexity_report: decryption rate must be positive");
    ComplexityReport r;
    r.trials = results.size();
    double rt = 0, data = 0;
    for (const auto& x : results) {
        r.successes += x.success;
        rt += x.rt_seconds;
        data += x.actual_data;
    }
    r.success_rate = static_cast<double>(r.successes) / static_cast<double>(r.trials);
    r.mean_rt = rt / static_cast<double>(r.trials);
    r.log2_rate = std::log2(decryptions_per_second);
    r.log2_theoretical_data = log2_theoretical_data(cfg.m(), cfg.n_b, cfg.n_cts);
    r.log2_actual_data = std::log2(data / static_cast<double>(r.trials));
    if (r.successes == 0)
        r.note = "no success; complexity undefined";
    else
        r.log2_time = log2_time_complexity(r.log2_rate, r.mean_rt, r.success_rate);
    return r;
}

std::string to_json(const ComplexityReport& r)
{
    nlohmann::json j;
    j["trials"] = r.trials;
    j["successes"] = r.successes;
    j["success_rate"] = r.success_rate;
    j["mean_rt_seconds"] = r.mean_rt;
    j["log2_decryptions_per_second"] = r.log2_rate;
    j["log2_theoretical_data"] = r.log2_theoretical_data;
    j["log2_actual_data"] = r.log2_actual_data;
    j["log2_time"] = r.log2_time ? nlohmann::json(*r.log2_time) : nlohmann::json(nullptr);
    if (!r.note.empty())
        j["note"] = r.note;
    return j.dump(2);
}

std::string to_table(const ComplexityReport& r)
{
    std::ostringstream o;
    o << std::fixed << std::setprecision(3);
    o << "trials            " << r.trials << '\n';
    o << "successes         " << r.successes << " (sr " << r.success_rate << ")\n";
    o << "mean rt           " << r.mean_rt << " s\n";
    o << "decryption rate   2^" << r.log2_rate << " /s\n";
    o << "data theoretical  2^" << r.log2_theoretical_data << '\n';
    o << "data actual       2^" << r.log2_actual_data << '\n';
    if (r.log2_time)
        o << "time              2^" << *r.log2_time << '\n';
    else
        o << "time              " << r.note << '\n';
    return o.str();
}

double calibrate_decryption_rate(double seconds, unsigned threads)
{
    threads = std::max(1U, threads);
    std::atomic<std::uint64_t> total{0};
    std::atomic<Word> sink{0};
    parallel_chunks(threads, threads, threads, [&](std::size_t, std::size_t, std::size_t c) {
        Rng rng(c + 1);
        std::vector<State> buf(4096);
        std::vector<Word> keys(4096);
        for (std::size_t i = 0; i < buf.size(); ++i) {
            buf[i] = rng.state();
            keys[i] = rng.word();
        }
        const auto end = Clock::now() + std::chrono::duration<double>(seconds);
        std::uint64_t n = 0;
        Word acc = 0;
        do {
            for (std::size_t i = 0; i < buf.size(); ++i) {
                buf[i] = round_backward(buf[i], keys[i]);
                acc ^= buf[i].x;
            }
            n += buf.size();
        } while (Clock::now() < end);
        total += n;
        sink ^= acc;
    });
    return static_cast<double>(total.load()) / seconds;
}

}  // namespace simeck
