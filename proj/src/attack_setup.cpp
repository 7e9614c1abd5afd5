#include "simeck/attack_setup.hpp"

#include <fstream>
#include <stdexcept>

#include "simeck/diff_model.hpp"
#include "simeck/neural.hpp"

namespace simeck {

namespace {

using nlohmann::json;

template <class T>
T get(const json& j, const char* key, T fallback)
{
    if (!j.contains(key))
        return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config field '") + key + "': " + e.what());
    }
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base)
{
    return p.is_absolute() || base.empty() ? p : base / p;
}

std::vector<std::vector<unsigned>> bit_sets(const json& j, const char* key,
                                            std::vector<std::vector<unsigned>> fallback)
{
    if (!j.contains(key))
        return fallback;
    std::vector<std::vector<unsigned>> out;
    for (const auto& e : j.at(key)) {
        if (e.is_number_unsigned())
            out.push_back({e.get<unsigned>()});
        else
            out.push_back(e.get<std::vector<unsigned>>());
    }
    return out;
}

ScorerSpec parse_scorer(const json& j, const std::filesystem::path& base)
{
    ScorerSpec s;
    s.kind = get<std::string>(j, "kind", "ddt");
    if (s.kind != "ddt" && s.kind != "neural")
        throw std::invalid_argument("scorer kind must be 'ddt' or 'neural'");
    if (j.contains("table"))
        s.table = resolve(j.at("table").get<std::string>(), base);
    s.extra_rounds = get<unsigned>(j, "extra_rounds", 0);
    s.table_rounds = get<unsigned>(j, "table_rounds", 0);
    s.explicit_rounds = get<unsigned>(j, "explicit_rounds", 6);
    if (j.contains("input_diff"))
        s.input_diff = parse_diff(j.at("input_diff").get<std::string>());
    if (j.contains("model"))
        s.model = resolve(j.at("model").get<std::string>(), base);
    if (j.contains("profile"))
        s.profile = resolve(j.at("profile").get<std::string>(), base);
    s.profile_keys = get<unsigned>(j, "profile_keys", 500);
    s.profile_seed = get<std::uint64_t>(j, "profile_seed", 1);
    if (s.kind == "ddt" && !s.table && s.table_rounds == 0)
        throw std::invalid_argument("ddt scorer needs 'table' or 'table_rounds'");
    if (s.kind == "neural" && !s.model)
        throw std::invalid_argument("neural scorer needs 'model'");
    return s;
}

json scorer_json(const ScorerSpec& s)
{
    json j;
    j["kind"] = s.kind;
    if (s.table)
        j["table"] = s.table->string();
    if (s.extra_rounds)
        j["extra_rounds"] = s.extra_rounds;
    if (s.table_rounds) {
        j["table_rounds"] = s.table_rounds;
        j["explicit_rounds"] = s.explicit_rounds;
    }
    j["input_diff"] = format_diff(s.input_diff);
    if (s.model)
        j["model"] = s.model->string();
    if (s.profile)
        j["profile"] = s.profile->string();
    else {
        j["profile_keys"] = s.profile_keys;
        j["profile_seed"] = s.profile_seed;
    }
    return j;
}

}  // namespace

AttackSpec parse_attack_spec(const json& j, const std::filesystem::path& base_dir)
{
    if (!j.is_object())
        throw std::invalid_argument("attack config must be a JSON object");
    AttackSpec spec;
    auto& c = spec.config;
    c.s = get<unsigned>(j, "s", c.s);
    c.r = get<unsigned>(j, "r", c.r);
    if (j.contains("cd")) {
        const auto& cd = j.at("cd");
        c.cd.input_diff = parse_diff(cd.at("input").get<std::string>());
        c.cd.output_diff = parse_diff(cd.at("output").get<std::string>());
        c.cd.rounds = get<unsigned>(cd, "rounds", c.s);
    } else {
        c.cd.rounds = c.s;
    }
    c.convention = parse_convention(get<std::string>(j, "convention", "xy"));
    c.m_bits = bit_sets(j, "m_bits", c.m_bits);
    c.structure_bits = bit_sets(j, "structure_bits", c.structure_bits);
    c.n_cts = get<unsigned>(j, "n_cts", c.n_cts);
    c.n_b = get<unsigned>(j, "n_b", 1U << c.structure_bits.size());
    c.n_it = get<unsigned>(j, "n_it", c.n_it);
    c.c1 = get<double>(j, "c1", c.c1);
    c.c2 = get<double>(j, "c2", c.c2);
    c.n_byit1 = get<unsigned>(j, "n_byit1", c.n_byit1);
    c.n_cand1 = get<unsigned>(j, "n_cand1", c.n_cand1);
    c.n_byit2 = get<unsigned>(j, "n_byit2", c.n_byit2);
    c.n_cand2 = get<unsigned>(j, "n_cand2", c.n_cand2);
    c.seed = get<std::uint64_t>(j, "seed", c.seed);
    c.trials = get<unsigned>(j, "trials", c.trials);
    if (!j.contains("d_r") || !j.contains("d_r1"))
        throw std::invalid_argument("attack config needs 'd_r' and 'd_r1' scorers");
    spec.d_r = parse_scorer(j.at("d_r"), base_dir);
    spec.d_r1 = parse_scorer(j.at("d_r1"), base_dir);
    c.validate();
    return spec;
}

AttackSpec load_attack_spec(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::invalid_argument("cannot open attack config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(path.string() + ": " + e.what());
    }
    return parse_attack_spec(j, path.parent_path());
}

json to_json(const AttackSpec& spec)
{
    const auto& c = spec.config;
    json j;
    j["s"] = c.s;
    j["r"] = c.r;
    j["cd"] = {{"input", format_diff(c.cd.input_diff)},
               {"output", format_diff(c.cd.output_diff)},
               {"rounds", c.cd.rounds}};
    j["convention"] = to_string(c.convention);
    j["m_bits"] = c.m_bits;
    j["structure_bits"] = c.structure_bits;
    j["n_cts"] = c.n_cts;
    j["n_b"] = c.n_b;
    j["n_it"] = c.n_it;
    j["c1"] = c.c1;
    j["c2"] = c.c2;
    j["n_byit1"] = c.n_byit1;
    j["n_cand1"] = c.n_cand1;
    j["n_byit2"] = c.n_byit2;
    j["n_cand2"] = c.n_cand2;
    j["seed"] = c.seed;
    j["trials"] = c.trials;
    j["d_r"] = scorer_json(spec.d_r);
    j["d_r1"] = scorer_json(spec.d_r1);
    return j;
}

std::shared_ptr<const Distinguisher> build_scorer(const ScorerSpec& s, unsigned threads)
{
    if (s.kind == "neural")
        return std::make_shared<const NeuralDistinguisher>(load_model(*s.model));
    PropagateOptions o;
    o.threads = threads;
    std::shared_ptr<const DifferenceOracle> table;
    if (s.table) {
        auto base = std::make_shared<const SparseDistribution>(load_distribution(*s.table));
        if (s.extra_rounds > 1)
            throw std::invalid_argument("at most one lazy round on top of a saved table");
        table = s.extra_rounds ? std::shared_ptr<const DifferenceOracle>(
                                     std::make_shared<const ExtendedDistribution>(*base, 0.0, threads))
                               : base;
    } else {
        table = make_difference_table(s.input_diff, s.table_rounds, s.explicit_rounds, o);
    }
    return std::make_shared<const DdtDistinguisher>(table);
}

std::shared_ptr<const WrongKeyProfile> build_profile(const ScorerSpec& s, const Distinguisher& d, unsigned threads)
{
    if (s.profile) {
        auto p = std::make_shared<const WrongKeyProfile>(load_profile(*s.profile));
        if (p->rounds != d.rounds() || p->distinguisher_id != d.id())
            throw std::invalid_argument("profile " + s.profile->string() + " was computed for " +
                                        p->distinguisher_id + ", not " + d.id());
        return p;
    }
    ProfileConfig pc;
    pc.n_keys = s.profile_keys;
    pc.seed = s.profile_seed;
    pc.input_diff = s.input_diff;
    pc.threads = threads;
    return std::make_shared<const WrongKeyProfile>(compute_profile(d, pc));
}

AttackComponents build_components(const AttackSpec& spec, unsigned threads,
                                  const std::function<void(const std::string&)>& log)
{
    auto say = [&](const std::string& s) {
        if (log)
            log(s);
    };
    AttackComponents c;
    say("building d_r");
    c.d_r = build_scorer(spec.d_r, threads);
    say("building d_r1");
    c.d_r1 = build_scorer(spec.d_r1, threads);
    say("profile for " + c.d_r->id());
    c.profile_r = build_profile(spec.d_r, *c.d_r, threads);
    say("profile for " + c.d_r1->id());
    c.profile_r1 = build_profile(spec.d_r1, *c.d_r1, threads);
    return c;
}

}  // namespace simeck
