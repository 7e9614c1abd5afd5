#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "simeck/attack.hpp"
#include "simeck/attack_setup.hpp"
#include "simeck/rng.hpp"

using namespace simeck;

namespace {

// Scores 1 when the peeled sample's key-free previous difference is the target.
class FixedScorer final : public Distinguisher {
public:
    explicit FixedScorer(double v) : v_(v) {}
    unsigned rounds() const noexcept override { return 3; }
    std::string id() const override { return "fixed"; }
    double score(std::span<const CipherPair>) const override { return v_; }

private:
    double v_;
};

// 1+1+6+1 rounds around a one-round CD of probability 1/4. Right-word bits are
// trivially neutral for one round.
AttackConfig mini_config()
{
    AttackConfig c;
    c.s = 1;
    c.r = 6;
    c.cd = {{0x0040, 0x0080}, {0x0000, 0x0040}, 1};
    c.m_bits = {{0}, {1}, {2}};
    c.structure_bits = {{3}, {4}, {5}, {6}};
    c.n_b = 16;
    c.n_cts = 8;
    c.n_it = 16;
    c.c1 = 10;
    c.c2 = 10;
    c.n_cand1 = c.n_cand2 = 16;
    c.n_byit1 = c.n_byit2 = 3;
    c.seed = 21;
    c.trials = 4;
    return c;
}

const AttackComponents& mini_components()
{
    static const AttackComponents comp = [] {
        AttackComponents c;
        c.d_r = std::make_shared<const DdtDistinguisher>(make_difference_table({0, 0x40}, 5, 5));
        c.d_r1 = std::make_shared<const DdtDistinguisher>(make_difference_table({0, 0x40}, 4, 4));
        ProfileConfig pc;
        pc.n_keys = 4;
        pc.seed = 2;
        c.profile_r = std::make_shared<const WrongKeyProfile>(compute_profile(*c.d_r, pc));
        c.profile_r1 = std::make_shared<const WrongKeyProfile>(compute_profile(*c.d_r1, pc));
        return c;
    }();
    return comp;
}

}  // namespace

TEST_CASE("combined score term")
{
    CHECK(combined_term(0.5) == doctest::Approx(0.0));
    CHECK(combined_term(1.0) == doctest::Approx(std::log2((1 - 0x1.0p-16) / 0x1.0p-16)));
    CHECK(combined_term(0.0) == doctest::Approx(-combined_term(1.0)));
    CHECK(combined_term(0.8) == doctest::Approx(2.0));
    CHECK((0xFFFF & kRankMask) == 0xCFFF);
}

TEST_CASE("ucb priority")
{
    CHECK(ucb_priority(1.5, 3, 1, 64) == 1.5);
    CHECK(ucb_priority(0, 1, 4, 16) == doctest::Approx(4 * std::sqrt(2.0)));
    CHECK(std::isinf(ucb_priority(0, 0, 7, 16)));
    CHECK(ucb_priority(0, 2, 8, 16) > ucb_priority(0, 3, 8, 16));
    CHECK_THROWS_AS(ucb_priority(0, 1, 0, 16), std::invalid_argument);
}

TEST_CASE("success rule")
{
    const KeyPair t{0x1234, 0xABCD};
    CHECK(key_guess_success(t, t));
    CHECK(key_guess_success({0x1235, 0xABCC}, t));
    CHECK(key_guess_success({0x1234 ^ 0x0300, 0xABCD}, t));
    CHECK_FALSE(key_guess_success({0x1235, 0xABCF ^ 0x0001}, t));
    CHECK_FALSE(key_guess_success({0x1234 ^ 0x0007, 0xABCD}, t));
}

TEST_CASE("bayesian search shape and keyspace")
{
    const FixedScorer d(0.3);
    WrongKeyProfile prof;
    Rng prng(4);
    for (std::size_t i = 0; i < kProfileSize; ++i) {
        prof.mu[i] = prng.uniform();
        prof.sigma[i] = i % 7 == 0 ? 0.0 : 0.1;  // exercises the sigma floor
    }
    std::vector<CipherPair> pairs(64);
    Rng rng(1);
    const auto out = bayesian_key_search(pairs, 8, d, prof, 32, 5, rng, 1);
    CHECK(out.size() == 160);
    for (std::size_t i = 0; i < 32; ++i)
        CHECK((out[i].key & ~kRankMask) == 0);
    for (const auto& e : out)
        CHECK(std::isfinite(e.score));
    CHECK_THROWS_AS(bayesian_key_search(pairs, 8, d, prof, 0, 5, rng), std::invalid_argument);
    CHECK_THROWS_AS(bayesian_key_search(pairs, 8, d, prof, 16385, 5, rng), std::invalid_argument);

    // lambda ranking: with a profile that is 1 only at delta 0 and a scorer
    // returning 1, later candidates sit on the earlier ones up to bits 12-13
    WrongKeyProfile spike;
    std::fill(spike.sigma.begin(), spike.sigma.end(), 0.1);
    const FixedScorer one(1.0);
    Rng r2(2);
    const auto l = bayesian_key_search(pairs, 8, one, spike, 4, 2, r2, 1);
    REQUIRE(l.size() == 8);
    spike.mu[0] = 1.0;
    Rng r3(2);
    const auto l2 = bayesian_key_search(pairs, 8, one, spike, 4, 2, r3, 1);
    for (std::size_t i = 4; i < 8; ++i) {
        bool near = false;
        for (std::size_t k = 0; k < 4; ++k)
            near = near || ((l2[i].key ^ l2[k].key) & kRankMask) == 0;
        CHECK(near);
    }
}

TEST_CASE("structure difference invariant")
{
    AttackConfig cfg = mini_config();
    Rng rng(6);
    const RoundKeys keys = expand_key(rng.master_key(), cfg.total_rounds());
    const auto pts = structure_plaintexts(cfg, rng.state());
    CHECK(pts.size() == std::size_t{cfg.n_b} * cfg.m());
    for (const auto& [a, b] : pts)
        CHECK((round_forward(a, keys[0]) ^ round_forward(b, keys[0])) == cfg.cd.input_diff);

    cfg = AttackConfig{};
    cfg.structure_bits = {{7}, {8}, {9}, {13}, {14}, {15}};
    const auto big = structure_plaintexts(cfg, State{0x1234, 0x5678});
    CHECK(big.size() == 512);
    for (const auto& [a, b] : big)
        CHECK((round_forward(a, 0xBEEF) ^ round_forward(b, 0xBEEF)) == cfg.cd.input_diff);
    // all first texts are distinct
    std::vector<std::uint32_t> firsts;
    for (const auto& [a, b] : big)
        firsts.push_back(a.packed());
    std::sort(firsts.begin(), firsts.end());
    CHECK(std::adjacent_find(firsts.begin(), firsts.end()) == firsts.end());

    // conformance flag agrees with direct encryption
    const auto structs = build_structures(mini_config(), keys, rng);
    CHECK(structs.size() == 8);
    for (const auto& s : structs)
        CHECK(s.pairs.size() == 128);
}

TEST_CASE("config validation")
{
    auto c = mini_config();
    CHECK_NOTHROW(c.validate());
    c.n_b = 8;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = mini_config();
    c.s = 2;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = mini_config();
    c.r = 40;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = mini_config();
    c.m_bits = {{40}};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("mini attack: determinism, success and data accounting")
{
    const auto cfg = mini_config();
    const auto& comp = mini_components();
    const auto results = run_trials(cfg, comp, 1);
    REQUIRE(results.size() == cfg.trials);
    unsigned successes = 0;
    for (const auto& r : results) {
        successes += r.success;
        CHECK(r.actual_data <= std::exp2(log2_theoretical_data(cfg.m(), cfg.n_b, cfg.n_cts)));
        CHECK(r.iterations <= cfg.n_it);
        CHECK(r.structures_used <= cfg.n_cts);
        if (r.success)
            CHECK(r.found);
    }
    MESSAGE("mini attack successes: " << successes << "/" << cfg.trials);
    CHECK(successes >= 2);

    const auto again = run_attack(cfg, comp, 1, 1);
    CHECK(again.success == results[1].success);
    CHECK(again.recovered == results[1].recovered);
    CHECK(again.truth == results[1].truth);
    CHECK(again.iterations == results[1].iterations);
    CHECK(again.structures_used == results[1].structures_used);
    CHECK(again.best_score == results[1].best_score);

    const auto line = to_json_line(results[0]);
    const auto back = attack_result_from_json(line);
    CHECK(back.success == results[0].success);
    CHECK(back.recovered == results[0].recovered);
    CHECK(back.iterations == results[0].iterations);

    // mismatched components are rejected
    AttackComponents swapped = comp;
    std::swap(swapped.d_r, swapped.d_r1);
    CHECK_THROWS_AS(run_attack(cfg, swapped, 0, 1), std::invalid_argument);
}

TEST_CASE("verifier: fixed point, planted key, monotone steps")
{
    const auto cfg = mini_config();
    const auto& comp = mini_components();
    Rng rng(31);
    const RoundKeys keys = expand_key(rng.master_key(), cfg.total_rounds());
    const KeyPair truth{keys[keys.size() - 1], keys[keys.size() - 2]};
    // a structure built from a conforming base
    std::vector<CipherPair> pairs;
    for (int tries = 0; tries < 200 && pairs.empty(); ++tries) {
        auto s = build_structures(cfg, keys, rng);
        for (auto& st : s)
            if (st.conforms && pairs.empty())
                pairs = st.pairs;
    }
    REQUIRE_FALSE(pairs.empty());

    const auto fixed = verifier_search(truth, pairs, cfg.m(), *comp.d_r, *comp.d_r1, 1);
    CHECK(fixed.keys == truth);
    CHECK(fixed.steps.empty());

    const auto again = verifier_search(fixed.keys, pairs, cfg.m(), *comp.d_r, *comp.d_r1, 1);
    CHECK(again.keys == fixed.keys);

    const KeyPair planted{static_cast<Word>(truth.k1 ^ 0x0100), truth.k2};
    const auto v = verifier_search(planted, pairs, cfg.m(), *comp.d_r, *comp.d_r1, 1);
    CHECK(v.keys == truth);
    CHECK_FALSE(v.steps.empty());
    for (const auto& s : v.steps)
        CHECK(s.after > s.before);
}

TEST_CASE("complexity accounting")
{
    CHECK(log2_time_complexity(26.693, 407.901, 119.0 / 120.0) == doctest::Approx(35.309).epsilon(0.01 / 35.309));
    CHECK(std::abs(log2_time_complexity(26.693, 407.901, 119.0 / 120.0) - 35.309) < 0.01);
    CHECK(log2_time_complexity(26.693, 2.0, 1.0) == doctest::Approx(27.693));
    CHECK_THROWS_AS(log2_time_complexity(26.693, 2.0, 0.0), std::domain_error);
    CHECK(log2_theoretical_data(8, 1 << 8, 1 << 10) == 22.0);
    CHECK(log2_theoretical_data(8, 1 << 10, 1 << 10) == 24.0);
    CHECK(log2_theoretical_data(8, 1 << 12, 1 << 10) == 26.0);

    AttackConfig cfg;
    cfg.structure_bits = {{7}, {8}, {9}, {13}, {14}, {15}};
    std::vector<AttackResult> rs(2);
    rs[0].rt_seconds = 2;
    rs[1].rt_seconds = 4;
    rs[0].actual_data = rs[1].actual_data = 1024;
    auto rep = complexity_report(rs, cfg, 1024.0);
    CHECK_FALSE(rep.log2_time);
    CHECK(rep.note == "no success; complexity undefined");
    rs[0].success = rs[1].success = true;
    rep = complexity_report(rs, cfg, 1024.0);
    REQUIRE(rep.log2_time);
    CHECK(*rep.log2_time == doctest::Approx(10 + std::log2(3.0)));
    CHECK(rep.log2_theoretical_data == 16.0);
    CHECK(rep.log2_actual_data == 10.0);
    CHECK(to_table(rep).find("time") != std::string::npos);
    CHECK(calibrate_decryption_rate(0.05, 1) > 1e5);
}

TEST_CASE("attack config files")
{
    const auto dir = std::filesystem::temp_directory_path();
    const auto path = dir / "simeck_attack_cfg.json";
    {
        std::ofstream f(path);
        f << R"({"s":1,"r":5,"cd":{"input":"0x0040:0x0080","output":"0x0000:0x0040"},
                "m_bits":[0,1,2],"structure_bits":[[3],[4]],"n_cts":8,"c1":5,"c2":5,
                "d_r":{"kind":"ddt","table_rounds":4,"profile":"prof_r.swkr"},
                "d_r1":{"kind":"ddt","table_rounds":3,"profile_keys":4}})";
    }
    const auto spec = load_attack_spec(path);
    CHECK(spec.config.s == 1);
    CHECK(spec.config.n_b == 4);
    CHECK(spec.config.m() == 8);
    CHECK(spec.config.cd.rounds == 1);
    REQUIRE(spec.d_r.profile);
    CHECK(*spec.d_r.profile == dir / "prof_r.swkr");
    CHECK(spec.d_r1.profile_keys == 4);
    const auto round = parse_attack_spec(to_json(spec), {});
    CHECK(round.config.structure_bits == spec.config.structure_bits);
    CHECK(round.config.c2 == spec.config.c2);

    CHECK_THROWS_AS(load_attack_spec(dir / "missing.json"), std::invalid_argument);
    CHECK_THROWS_AS(parse_attack_spec(nlohmann::json::parse(R"({"s":3})")), std::invalid_argument);
    CHECK_THROWS_AS(parse_attack_spec(nlohmann::json::parse(R"({"n_cts":"x","d_r":{},"d_r1":{}})")),
                    std::invalid_argument);
    std::filesystem::remove(path);
}

TEST_CASE("shipped attack configs")
{
    const std::filesystem::path dir = SIMECK_SOURCE_DIR "/configs";
    const auto desk = load_attack_spec(dir / "attack13_ddt.json");
    CHECK(desk.config.total_rounds() == 13);
    CHECK(desk.config.m() == 8);
    CHECK(desk.config.n_b == 64);
    CHECK(desk.config.n_cts == 64);
    CHECK(desk.d_r.table_rounds == 7);
    CHECK(desk.d_r1.table_rounds == 6);

    const struct {
        const char* file;
        unsigned rounds;
        double data;
    } paper[] = {{"attack15.json", 15, 22}, {"attack16.json", 16, 24}, {"attack17.json", 17, 26}};
    for (const auto& p : paper) {
        const auto spec = load_attack_spec(dir / p.file);
        CHECK(spec.config.total_rounds() == p.rounds);
        CHECK(log2_theoretical_data(spec.config.m(), spec.config.n_b, spec.config.n_cts) == p.data);
        CHECK(spec.d_r.kind == "neural");
    }
    CHECK(load_attack_spec(dir / "attack17.json").config.c2 == -120);
}
