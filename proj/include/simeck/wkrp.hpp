// Wrong-key response profiles: how a distinguisher reacts when the last
// round is peeled with the real subkey XOR delta.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "simeck/distinguisher.hpp"

namespace simeck {

inline constexpr std::size_t kProfileSize = 1 << 16;

struct WrongKeyProfile {
    unsigned rounds = 0;
    unsigned m = 0;
    unsigned n_keys = 0;
    std::string distinguisher_id;
    std::vector<double> mu = std::vector<double>(kProfileSize, 0.0);
    std::vector<double> sigma = std::vector<double>(kProfileSize, 0.0);

    friend bool operator==(const WrongKeyProfile&, const WrongKeyProfile&) = default;
};

struct ProfileConfig {
    unsigned n_keys = 500;
    /// 0 means the distinguisher's native m (8 when it accepts any m).
    unsigned m = 0;
    StateDiff input_diff{0x0000, 0x0040};
    std::uint64_t seed = 0;
    /// Every trial decrypts with k ^ key_offset ^ delta; used for relabeling checks.
    Word key_offset = 0;
    unsigned threads = default_thread_count();
    std::function<void(std::size_t done, std::size_t total)> on_progress;
};

struct ProfileEntry {
    double mu = 0;
    double sigma = 0;
};

/// Mean and (population) standard deviation of d's score over n_keys trials
/// of m pairs, encrypted d.rounds()+1 rounds and peeled with k ^ offset ^ delta.
/// The trial stream is keyed by the applied offset (delta ^ key_offset).
ProfileEntry profile_entry(const Distinguisher& d, Word delta, const ProfileConfig& cfg);

/// profile_entry for each listed delta.
std::vector<ProfileEntry> profile_entries(const Distinguisher& d, const std::vector<Word>& deltas,
                                          const ProfileConfig& cfg);

/// All 2^16 deltas. Throws std::invalid_argument when n_keys < 2.
WrongKeyProfile compute_profile(const Distinguisher& d, const ProfileConfig& cfg);

/// "SWKR" file: header, distinguisher id, 65536 x (mu f64, sigma f64), CRC32.
void save_profile(const WrongKeyProfile& p, const std::filesystem::path& path);
WrongKeyProfile load_profile(const std::filesystem::path& path);

/// delta,mu,sigma with a header row.
void export_profile_csv(const WrongKeyProfile& p, const std::filesystem::path& path);

}  // namespace simeck
