// JSON attack configs and construction of the scorers they name.
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <json.hpp>

#include "simeck/attack.hpp"

namespace simeck {

/// How to obtain one distinguisher and its wrong-key profile.
struct ScorerSpec {
    std::string kind = "ddt";  // "ddt" or "neural"
    // ddt: either a saved table (optionally extended lazily) or a fresh propagation
    std::optional<std::filesystem::path> table;
    unsigned extra_rounds = 0;
    unsigned table_rounds = 0;
    unsigned explicit_rounds = 6;
    StateDiff input_diff{0x0000, 0x0040};
    // neural
    std::optional<std::filesystem::path> model;
    // profile: loaded from file, or computed in memory with n_keys trials
    std::optional<std::filesystem::path> profile;
    unsigned profile_keys = 500;
    std::uint64_t profile_seed = 1;
};

struct AttackSpec {
    AttackConfig config;
    ScorerSpec d_r, d_r1;
};

/// Relative paths resolve against `base_dir`. Throws std::invalid_argument
/// on missing or ill-typed fields.
AttackSpec parse_attack_spec(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
AttackSpec load_attack_spec(const std::filesystem::path& path);
nlohmann::json to_json(const AttackSpec& spec);

std::shared_ptr<const Distinguisher> build_scorer(const ScorerSpec& s, unsigned threads);
std::shared_ptr<const WrongKeyProfile> build_profile(const ScorerSpec& s, const Distinguisher& d, unsigned threads);

AttackComponents build_components(const AttackSpec& spec, unsigned threads,
                                  const std::function<void(const std::string&)>& log = {});

}  // namespace simeck
