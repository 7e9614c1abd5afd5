// (1+s+r+1)-round key recovery: neutral-bit structures, UCB scheduling over
// structures, masked Bayesian key search and a final 2-bit hill climb.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "simeck/distinguisher.hpp"
#include "simeck/neutral_bits.hpp"
#include "simeck/rng.hpp"
#include "simeck/wkrp.hpp"

namespace simeck {

/// Clamp applied to scores before log2(v / (1 - v)).
inline constexpr double kScoreClamp = 0x1.0p-16;
/// Floor on sigma when it divides in lambda.
inline constexpr double kSigmaFloor = 1e-6;
/// Keys ranked by lambda keep bits 12 and 13 clear.
inline constexpr Word kRankMask = 0xCFFF;

double combined_term(double v) noexcept;

struct ScoredKey {
    Word key = 0;
    double score = 0;
};

/// n_b samples of m pairs, all derived from one base pair.
struct CiphertextStructure {
    std::vector<CipherPair> pairs;  // n_b * m, sample-major
    unsigned n_b = 0;
    unsigned m = 0;
    double w_max = -std::numeric_limits<double>::infinity();
    unsigned n_visit = 0;
    /// Ground truth kept for reporting only: the base pair followed the CD.
    bool conforms = false;
};

/// Both texts of every pair decrypted one round with `key`.
std::vector<CipherPair> peel(std::span<const CipherPair> pairs, Word key);

struct KeyEvaluation {
    double score = 0;  // sum over samples of log2(v / (1 - v))
    double mean = 0;   // mean of v
};

/// Scores the structure under one last-round key guess.
KeyEvaluation evaluate_key(std::span<const CipherPair> pairs, unsigned m, Word key, const Distinguisher& d);

/// Masked Bayesian key search; returns exactly n_byit * n_cand entries.
std::vector<ScoredKey> bayesian_key_search(std::span<const CipherPair> pairs, unsigned m, const Distinguisher& d,
                                           const WrongKeyProfile& profile, unsigned n_cand, unsigned n_byit, Rng& rng,
                                           unsigned threads = 1);

/// w_max + sqrt(n_cts) * sqrt(log2(j) / n_visit); +inf for unvisited structures.
double ucb_priority(double w_max, unsigned n_visit, std::uint64_t j, unsigned n_cts);

struct KeyPair {
    Word k1 = 0;  // last subkey
    Word k2 = 0;  // second-to-last subkey

    friend bool operator==(const KeyPair&, const KeyPair&) = default;
};

struct VerifierStep {
    int subkey = 1;  // 1 or 2
    Word from = 0, to = 0;
    double before = 0, after = 0;
};

struct VerifierResult {
    KeyPair keys;
    double score = 0;  // d_{r-1} combined score after peeling both rounds
    std::vector<VerifierStep> steps;
};

/// Hill climb over all <= 2-bit changes of k1 (scored with d_r after one
/// peel) and k2 (scored with d_{r-1} after two peels) until a full sweep
/// improves neither.
VerifierResult verifier_search(KeyPair start, std::span<const CipherPair> pairs, unsigned m, const Distinguisher& d_r,
                               const Distinguisher& d_r1, unsigned threads = 1);

bool key_guess_success(KeyPair guess, KeyPair truth) noexcept;

struct AttackConfig {
    unsigned s = 3;
    unsigned r = 8;
    Differential cd{{0x0140, 0x0200}, {0x0000, 0x0040}, 3};
    BitConvention convention = BitConvention::XY;
    std::vector<std::vector<unsigned>> m_bits{{3}, {4}, {5}};
    std::vector<std::vector<unsigned>> structure_bits;
    unsigned n_cts = 64;
    unsigned n_b = 64;
    unsigned n_it = 256;
    double c1 = 10;
    double c2 = 10;
    unsigned n_byit1 = 5, n_cand1 = 32;
    unsigned n_byit2 = 5, n_cand2 = 32;
    std::uint64_t seed = 0;
    unsigned trials = 1;

    unsigned m() const noexcept { return 1U << m_bits.size(); }
    unsigned total_rounds() const noexcept { return 1 + s + r + 1; }
    /// Throws std::invalid_argument on any inconsistency.
    void validate() const;
};

/// Scorers with their profiles: d_r for r rounds and d_{r-1}.
struct AttackComponents {
    std::shared_ptr<const Distinguisher> d_r, d_r1;
    std::shared_ptr<const WrongKeyProfile> profile_r, profile_r1;
};

/// Queried plaintexts are the structured round-1 states inverted one round
/// under a zero subkey; ciphertexts come from the full (1+s+r+1) rounds.
std::vector<CiphertextStructure> build_structures(const AttackConfig& cfg, const RoundKeys& keys, Rng& rng);

/// Plaintext pairs behind one structure (before encryption), for checks.
std::vector<std::pair<State, State>> structure_plaintexts(const AttackConfig& cfg, State base);

struct AttackResult {
    std::uint64_t trial = 0;
    std::uint64_t seed = 0;
    bool success = false;
    bool found = false;  // false when no candidate ever passed c1
    KeyPair recovered;
    KeyPair truth;
    double best_score = -std::numeric_limits<double>::infinity();
    unsigned iterations = 0;
    unsigned structures_used = 0;
    double rt_seconds = 0;
    double actual_data = 0;  // plaintexts in structures touched
    bool conforming_structure = false;  // some structure's base pair followed the CD
};

/// One attack trial with a fresh master key from (cfg.seed, trial).
AttackResult run_attack(const AttackConfig& cfg, const AttackComponents& comp, std::uint64_t trial,
                        unsigned threads = default_thread_count());

/// Independent trials in parallel; on_result is called in completion order.
std::vector<AttackResult> run_trials(const AttackConfig& cfg, const AttackComponents& comp, unsigned threads,
                                     const std::function<void(const AttackResult&)>& on_result = {});

std::string to_json_line(const AttackResult& r);
AttackResult attack_result_from_json(const std::string& line);

// --- complexity accounting ---------------------------------------------

/// log2(n_b * n_cts * m * 2).
double log2_theoretical_data(unsigned m, std::uint64_t n_b, std::uint64_t n_cts);

/// log2(rate * rt * log_{1-sr}(0.01)); the last factor is dropped for sr = 1.
/// Throws std::domain_error for sr <= 0 or sr > 1.
double log2_time_complexity(double log2_rate, double rt_seconds, double sr);

struct ComplexityReport {
    std::size_t trials = 0;
    std::size_t successes = 0;
    double success_rate = 0;
    double mean_rt = 0;
    double log2_rate = 0;
    double log2_theoretical_data = 0;
    double log2_actual_data = 0;
    std::optional<double> log2_time;  // empty when no trial succeeded
    std::string note;
};

ComplexityReport complexity_report(const std::vector<AttackResult>& results, const AttackConfig& cfg,
                                   double decryptions_per_second);
std::string to_json(const ComplexityReport& r);
std::string to_table(const ComplexityReport& r);

/// One-round decryptions per second over `threads` threads for about `seconds`.
double calibrate_decryption_rate(double seconds = 1.0, unsigned threads = 1);

}  // namespace simeck
