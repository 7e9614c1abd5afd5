// simeck-lab: command-line front end for every pipeline stage.
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "manifest.hpp"
#include "simeck/attack_setup.hpp"
#include "simeck/diff_model.hpp"
#include "simeck/errors.hpp"
#include "simeck/neural.hpp"
#include "simeck/neutral_bits.hpp"
#include "simeck/wkrp.hpp"

using namespace simeck;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kOther = 1, kUsage = 2, kFormat = 3, kResource = 4 };

int report_error(const char* cls, int code, const std::string& msg)
{
    std::cerr << json{{"error", cls}, {"message", msg}}.dump() << '\n';
    return code;
}

std::vector<unsigned> parse_bits(const std::string& s)
{
    std::vector<unsigned> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty())
            out.push_back(static_cast<unsigned>(std::stoul(tok)));
    return out;
}

// "21;21,5;21,10" -> {{21},{21,5},{21,10}}
std::vector<std::vector<unsigned>> parse_bit_sets(const std::string& s)
{
    std::vector<std::vector<unsigned>> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ';'))
        if (!tok.empty())
            out.push_back(parse_bits(tok));
    return out;
}

std::string log2_text(double p)
{
    if (p <= 0)
        return "0";
    std::ostringstream o;
    o << std::setprecision(5) << "2^" << std::log2(p);
    return o.str();
}

// ---------------------------------------------------------------------------

struct Globals {
    unsigned threads = default_thread_count();
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string manifest;
};

struct TableSource {
    std::string table;
    unsigned extra_rounds = 0;
    std::string diff = "0x0000:0x0040";
    unsigned rounds = 0;
    double prune_floor = 0;

    void add(CLI::App* c, bool rounds_flag = true)
    {
        c->add_option("--table", table, "saved SDDT distribution")->check(CLI::ExistingFile);
        c->add_option("--extra-rounds", extra_rounds, "lazy rounds on top of --table (0 or 1)")->check(CLI::Range(0, 1));
        c->add_option("--diff,--in-diff", diff, "input difference dx:dy");
        if (rounds_flag)
            c->add_option("--rounds", rounds, "distribution rounds when no --table is given");
        c->add_option("--prune-floor", prune_floor, "drop entries below this probability (deep rounds)");
    }

    struct Loaded {
        std::shared_ptr<const SparseDistribution> sparse;
        std::shared_ptr<const ExtendedDistribution> ext;
        std::shared_ptr<const DifferenceOracle> oracle;
    };

    Loaded load(unsigned threads) const
    {
        Loaded l;
        PropagateOptions o;
        o.threads = threads;
        o.prune_floor = prune_floor;
        if (!table.empty()) {
            l.sparse = std::make_shared<const SparseDistribution>(load_distribution(table));
        } else {
            if (rounds == 0)
                throw std::invalid_argument("give --table or --rounds");
            const unsigned explicit_rounds = rounds <= 6 ? rounds : rounds - 1;
            l.sparse = std::make_shared<const SparseDistribution>(propagate(parse_diff(diff), explicit_rounds, o));
            if (explicit_rounds < rounds)
                l.ext = std::make_shared<const ExtendedDistribution>(*l.sparse, prune_floor, threads);
        }
        if (!table.empty() && extra_rounds == 1)
            l.ext = std::make_shared<const ExtendedDistribution>(*l.sparse, prune_floor, threads);
        l.oracle = l.ext ? std::shared_ptr<const DifferenceOracle>(l.ext) : l.sparse;
        return l;
    }
};

struct ScorerSource {
    std::string model;
    std::string table;
    unsigned extra_rounds = 0;
    unsigned ddt_rounds = 0;
    std::string diff = "0x0000:0x0040";

    void add(CLI::App* c)
    {
        c->add_option("--model", model, "neural model file")->check(CLI::ExistingFile);
        c->add_option("--table", table, "SDDT distribution backing a DDT scorer")->check(CLI::ExistingFile);
        c->add_option("--extra-rounds", extra_rounds, "lazy rounds on top of --table")->check(CLI::Range(0, 1));
        c->add_option("--ddt-rounds", ddt_rounds, "build an R-round DDT scorer in memory");
        c->add_option("--diff", diff, "input difference dx:dy");
    }

    ScorerSpec spec() const
    {
        ScorerSpec s;
        s.input_diff = parse_diff(diff);
        if (!model.empty()) {
            s.kind = "neural";
            s.model = model;
        } else if (!table.empty()) {
            s.table = table;
            s.extra_rounds = extra_rounds;
        } else if (ddt_rounds >= 2) {
            s.table_rounds = ddt_rounds - 1;
            s.explicit_rounds = 6;
        } else {
            throw std::invalid_argument("give --model, --table or --ddt-rounds (>= 2)");
        }
        return s;
    }

    std::vector<std::string> inputs() const
    {
        std::vector<std::string> v;
        if (!model.empty())
            v.push_back(model);
        if (!table.empty())
            v.push_back(table);
        return v;
    }
};

json report_json(const AccuracyReport& r, unsigned rounds)
{
    json j{{"rounds", rounds},
           {"m", r.m},
           {"acc", r.acc},
           {"tpr", r.tpr},
           {"tnr", r.tnr},
           {"method", r.method == AccuracyMethod::Exact ? "exact" : "monte-carlo"},
           {"samples", r.sample_count},
           {"pruned_mass", r.pruned_mass}};
    if (!r.warning.empty())
        j["warning"] = r.warning;
    return j;
}

struct CdOptions {
    std::string in = "0x0140:0x0200";
    std::string out = "0x0000:0x0040";
    unsigned rounds = 3;
    std::size_t pairs = 10000;
    std::string convention = "auto";

    void add(CLI::App* c)
    {
        c->add_option("--cd-in", in, "differential input difference");
        c->add_option("--cd-out", out, "differential output difference");
        c->add_option("--cd-rounds", rounds, "differential rounds");
        c->add_option("--pairs", pairs, "conforming pairs to collect");
        c->add_option("--convention", convention, "bit convention: auto, xy or yx")
            ->check(CLI::IsMember({"auto", "xy", "yx"}));
    }

    Differential differential() const { return {parse_diff(in), parse_diff(out), rounds}; }

    BitConvention resolve(std::uint64_t seed, unsigned threads, json& cfg) const
    {
        if (convention != "auto")
            return parse_convention(convention);
        CollectOptions co;
        co.threads = threads;
        const auto cal_pairs = collect_conforming_pairs(reference_differential_3r(), 2000, seed ^ 0xca1, co);
        const auto cal = calibrate_convention(cal_pairs);
        cfg["calibration"] = {{"convention", to_string(cal.convention)},
                              {"worst", cal.worst},
                              {"worst_other", cal.worst_other}};
        std::cerr << "calibrated bit convention: " << to_string(cal.convention) << " (worst reference set "
                  << cal.worst << ", other " << cal.worst_other << ")\n";
        return cal.convention;
    }
};

// Writes lines to a file (atomically) or stdout.
class LineSink {
public:
    explicit LineSink(std::string path) : path_(std::move(path)) {}
    void line(const std::string& s)
    {
        if (path_.empty())
            std::cout << s << '\n';
        else
            buf_ << s << '\n';
    }
    void close()
    {
        if (!path_.empty())
            cli::write_atomic(path_, buf_.str());
    }

private:
    std::string path_;
    std::ostringstream buf_;
};


int run(const std::vector<std::string>& args)
{
    CLI::App app{"SIMECK32/64 differential cryptanalysis workbench"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--threads", g.threads, "worker threads (default: SIMECK_THREADS or all cores)")
        ->check(CLI::PositiveNumber);
    auto* seed_opt = app.add_option("--seed", g.seed, "seed for every stochastic step");
    app.add_option("--manifest", g.manifest, "manifest path (default: <first output>.manifest.json)");

    std::function<void(cli::Manifest&)> action;
    std::string command;
    auto set = [&](CLI::App* sub, std::string name, std::function<void(cli::Manifest&)> f) {
        sub->callback([&, name, f] {
            command = name;
            action = f;
        });
    };

    // --- ddt ----------------------------------------------------------------
    auto* ddt = app.add_subcommand("ddt", "difference distributions")->require_subcommand(1);

    struct {
        std::string diff = "0x0000:0x0040";
        unsigned rounds = 0;
        std::string output, checkpoint;
        double prune_floor = 0, memory_cap_mb = 0;
    } dc;
    auto* ddt_compute = ddt->add_subcommand("compute", "propagate and save an explicit distribution");
    ddt_compute->add_option("--diff", dc.diff, "input difference dx:dy");
    ddt_compute->add_option("--rounds", dc.rounds, "rounds")->required();
    ddt_compute->add_option("--output,-o", dc.output, "SDDT output file")->required();
    ddt_compute->add_option("--prune-floor", dc.prune_floor, "drop entries below this probability");
    ddt_compute->add_option("--memory-cap-mb", dc.memory_cap_mb, "abort when a table exceeds this size");
    ddt_compute->add_option("--checkpoint", dc.checkpoint, "where to save the last complete round on abort");
    set(ddt_compute, "ddt compute", [&](cli::Manifest& m) {
        PropagateOptions o;
        o.threads = g.threads;
        o.prune_floor = dc.prune_floor;
        o.memory_cap_bytes = static_cast<std::uint64_t>(dc.memory_cap_mb * 1024 * 1024);
        if (!dc.checkpoint.empty())
            o.checkpoint_path = dc.checkpoint;
        o.on_round = [](unsigned r, std::size_t n) { std::cerr << "round " << r << ": " << n << " entries\n"; };
        m.config() = {{"diff", dc.diff}, {"rounds", dc.rounds}, {"prune_floor", dc.prune_floor},
                      {"memory_cap_mb", dc.memory_cap_mb}};
        const auto dist = propagate(parse_diff(dc.diff), dc.rounds, o);
        save_distribution(dist, dc.output);
        m.output(dc.output);
        const auto [best, p] = dist.argmax();
        std::cout << json{{"rounds", dist.rounds()},
                          {"entries", dist.size()},
                          {"total_mass", dist.total_mass()},
                          {"pruned_mass", dist.pruned_mass()},
                          {"argmax", format_diff(best)},
                          {"argmax_p", p}}
                         .dump()
                  << '\n';
    });

    TableSource dq;
    std::vector<std::string> dq_out;
    auto* ddt_query = ddt->add_subcommand("query", "probability of output differences");
    dq.add(ddt_query);
    ddt_query->add_option("--out", dq_out, "output difference dx:dy (repeatable)")->required();
    set(ddt_query, "ddt query", [&](cli::Manifest& m) {
        if (!dq.table.empty())
            m.input(dq.table);
        const auto t = dq.load(g.threads);
        m.config() = {{"table", dq.table}, {"diff", dq.diff}, {"rounds", t.oracle->rounds()}, {"out", dq_out}};
        for (const auto& s : dq_out) {
            const double p = t.oracle->query(parse_diff(s));
            std::cout << format_diff(t.oracle->input_diff()) << " -> " << s << " over " << t.oracle->rounds()
                      << " rounds: p = " << p << " (" << log2_text(p) << ")\n";
        }
    });

    TableSource da;
    unsigned da_m = 1;
    std::uint64_t da_samples = 1 << 20;
    std::string da_output;
    auto* ddt_acc = ddt->add_subcommand("accuracy", "accuracy of the DDT distinguisher");
    da.add(ddt_acc);
    ddt_acc->add_option("--m", da_m, "pairs per sample")->check(CLI::PositiveNumber);
    ddt_acc->add_option("--samples", da_samples, "Monte Carlo samples when m > 1");
    ddt_acc->add_option("--output,-o", da_output, "JSON report file");
    set(ddt_acc, "ddt accuracy", [&](cli::Manifest& m) {
        if (!da.table.empty())
            m.input(da.table);
        m.seed(g.seed);
        const auto t = da.load(g.threads);
        AccuracyReport r;
        if (da_m == 1)
            r = t.ext ? exact_single_pair_accuracy(*t.ext) : exact_single_pair_accuracy(*t.sparse);
        else
            r = combined_accuracy_mc(*t.oracle, da_m, da_samples, g.seed, g.threads);
        const auto j = report_json(r, t.oracle->rounds());
        m.config() = {{"table", da.table}, {"diff", da.diff}, {"rounds", t.oracle->rounds()}, {"m", da_m},
                      {"samples", da_samples}};
        std::cout << j.dump() << '\n';
        if (!r.warning.empty())
            std::cerr << "warning: " << r.warning << '\n';
        if (!da_output.empty()) {
            cli::write_atomic(da_output, j.dump(2) + "\n");
            m.output(da_output);
        }
    });

    TableSource dcb;
    std::vector<unsigned> dcb_m{2, 4, 8};
    std::uint64_t dcb_samples = 1 << 20;
    std::string dcb_output;
    auto* ddt_comb = ddt->add_subcommand("combine", "multi-pair combination of single-pair responses");
    dcb.add(ddt_comb);
    ddt_comb->add_option("--m", dcb_m, "pair counts")->delimiter(',');
    ddt_comb->add_option("--samples", dcb_samples, "samples per m");
    ddt_comb->add_option("--output,-o", dcb_output, "JSON lines file");
    set(ddt_comb, "ddt combine", [&](cli::Manifest& m) {
        if (!dcb.table.empty())
            m.input(dcb.table);
        m.seed(g.seed);
        const auto t = dcb.load(g.threads);
        m.config() = {{"table", dcb.table}, {"diff", dcb.diff}, {"rounds", t.oracle->rounds()}, {"m", dcb_m},
                      {"samples", dcb_samples}};
        LineSink out(dcb_output);
        for (unsigned k : dcb_m)
            out.line(report_json(combined_accuracy_mc(*t.oracle, k, dcb_samples, g.seed, g.threads),
                                 t.oracle->rounds())
                         .dump());
        out.close();
        if (!dcb_output.empty())
            m.output(dcb_output);
    });

    // --- dataset ------------------------------------------------------------
    auto* dataset = app.add_subcommand("dataset", "labelled ciphertext datasets")->require_subcommand(1);
    DatasetSpec ds;
    std::string ds_diff = "0x0000:0x0040", ds_output;
    auto* ds_gen = dataset->add_subcommand("generate", "generate a dataset");
    ds_gen->add_option("--rounds", ds.rounds, "rounds")->required();
    ds_gen->add_option("--m", ds.m, "pairs per sample")->check(CLI::PositiveNumber);
    ds_gen->add_option("--count", ds.count, "samples")->required();
    ds_gen->add_option("--diff", ds_diff, "input difference dx:dy");
    ds_gen->add_option("--positive-fraction", ds.positive_fraction, "fraction of real samples")
        ->check(CLI::Range(0.0, 1.0));
    ds_gen->add_option("--output,-o", ds_output, "dataset file")->required();
    set(ds_gen, "dataset generate", [&](cli::Manifest& m) {
        ds.input_diff = parse_diff(ds_diff);
        ds.seed = g.seed;
        m.seed(g.seed);
        m.config() = {{"rounds", ds.rounds}, {"m", ds.m}, {"count", ds.count}, {"diff", ds_diff},
                      {"positive_fraction", ds.positive_fraction}};
        save_dataset(generate_dataset(ds, g.threads), ds_output);
        m.output(ds_output);
    });

    // --- train ----------------------------------------------------------------
    auto* train = app.add_subcommand("train", "neural distinguisher training")->require_subcommand(1);
    TrainConfig tc;
    std::string tb_data, tb_val, tb_output;
    auto add_train_opts = [&](CLI::App* c) {
        c->add_option("--epochs", tc.epochs, "epochs");
        c->add_option("--batch-size", tc.batch_size, "mini-batch size");
        c->add_option("--lr-low", tc.lr_low, "cyclic schedule lower rate");
        c->add_option("--lr-high", tc.lr_high, "cyclic schedule upper rate");
        c->add_option("--lr-cycle", tc.lr_cycle, "cyclic schedule period");
        c->add_option("--l2", tc.l2, "L2 weight penalty");
    };
    auto epoch_log = [](const EpochReport& e) {
        std::cerr << "epoch " << e.epoch << " lr " << e.learning_rate << " loss " << e.train_loss << " val_loss "
                  << e.validation_loss << " val_acc " << e.validation_accuracy << '\n';
    };
    auto* tb = train->add_subcommand("basic", "train from scratch");
    tb->add_option("--data", tb_data, "training dataset")->required()->check(CLI::ExistingFile);
    tb->add_option("--validation", tb_val, "validation dataset (default: hold out a tail)")
        ->check(CLI::ExistingFile);
    tb->add_option("--output,-o", tb_output, "model file")->required();
    tb->add_option("--filters", tc.arch.filters, "filters per stem");
    tb->add_option("--res-blocks", tc.arch.res_blocks, "residual blocks");
    tb->add_option("--res-kernel", tc.arch.res_kernel, "residual kernel width");
    tb->add_option("--dense1", tc.arch.dense1, "first dense width");
    tb->add_option("--dense2", tc.arch.dense2, "second dense width");
    add_train_opts(tb);
    set(tb, "train basic", [&](cli::Manifest& m) {
        const auto data = load_dataset(tb_data);
        m.input(tb_data);
        tc.arch.pairs = data.m;
        tc.seed = g.seed;
        tc.on_epoch = epoch_log;
        m.seed(g.seed);
        m.config() = {{"epochs", tc.epochs}, {"batch_size", tc.batch_size}, {"lr_low", tc.lr_low},
                      {"lr_high", tc.lr_high}, {"lr_cycle", tc.lr_cycle}, {"l2", tc.l2},
                      {"filters", tc.arch.filters}, {"res_blocks", tc.arch.res_blocks},
                      {"res_kernel", tc.arch.res_kernel}, {"dense1", tc.arch.dense1}, {"dense2", tc.arch.dense2}};
        NeuralModel model;
        if (!tb_val.empty()) {
            m.input(tb_val);
            model = train_basic(data, load_dataset(tb_val, {data.rounds, data.m}), tc);
        } else {
            model = train_basic(data, tc);
        }
        save_model(model, tb_output);
        m.output(tb_output);
        std::cout << json{{"validation_loss", model.meta.validation_loss},
                          {"validation_accuracy", model.meta.validation_accuracy},
                          {"better_than_random", model.meta.better_than_random}}
                         .dump()
                  << '\n';
        if (!model.meta.better_than_random)
            std::cerr << "warning: validation accuracy is not better than random\n";
    });

    StagedConfig sc;
    std::string ts_base, ts_output;
    auto* ts = train->add_subcommand("staged", "retrain an (R-1)-round model for R rounds");
    ts->add_option("--base", ts_base, "base model")->required()->check(CLI::ExistingFile);
    ts->add_option("--rounds", sc.rounds, "target rounds")->required();
    ts->add_option("--samples", sc.samples, "training samples per stage");
    ts->add_option("--validation-samples", sc.validation_samples, "validation samples per stage");
    ts->add_option("--epochs1", sc.epochs_stage1, "stage 1 epochs");
    ts->add_option("--epochs2", sc.epochs_stage2, "stage 2 epochs");
    ts->add_option("--epochs3", sc.epochs_stage3, "stage 3 epochs");
    ts->add_option("--batch-size", sc.stage.batch_size, "mini-batch size");
    ts->add_option("--output,-o", ts_output, "model file")->required();
    set(ts, "train staged", [&](cli::Manifest& m) {
        const auto base = load_model(ts_base);
        m.input(ts_base);
        sc.stage.seed = g.seed;
        sc.stage.on_epoch = epoch_log;
        sc.threads = g.threads;
        m.seed(g.seed);
        m.config() = {{"rounds", sc.rounds}, {"samples", sc.samples}, {"validation_samples", sc.validation_samples},
                      {"epochs", {sc.epochs_stage1, sc.epochs_stage2, sc.epochs_stage3}},
                      {"batch_size", sc.stage.batch_size}};
        const auto model = train_staged(base, sc);
        save_model(model, ts_output);
        m.output(ts_output);
        std::cout << json{{"validation_loss", model.meta.validation_loss},
                          {"validation_accuracy", model.meta.validation_accuracy},
                          {"better_than_random", model.meta.better_than_random}}
                         .dump()
                  << '\n';
    });

    // --- distinguisher ---------------------------------------------------------
    auto* dist = app.add_subcommand("distinguisher", "scoring")->require_subcommand(1);
    ScorerSource de;
    std::string de_data, de_output;
    auto* dist_eval = dist->add_subcommand("evaluate", "accuracy on a labelled dataset");
    de.add(dist_eval);
    dist_eval->add_option("--data", de_data, "dataset")->required()->check(CLI::ExistingFile);
    dist_eval->add_option("--output,-o", de_output, "JSON report file");
    set(dist_eval, "distinguisher evaluate", [&](cli::Manifest& m) {
        for (const auto& p : de.inputs())
            m.input(p);
        m.input(de_data);
        const auto d = build_scorer(de.spec(), g.threads);
        const auto data = load_dataset(de_data);
        const auto r = evaluate(*d, data, g.threads);
        auto j = report_json(r, d->rounds());
        j["distinguisher"] = d->id();
        m.config() = {{"distinguisher", d->id()}};
        std::cout << j.dump() << '\n';
        if (!de_output.empty()) {
            cli::write_atomic(de_output, j.dump(2) + "\n");
            m.output(de_output);
        }
    });

    // --- nb -------------------------------------------------------------------
    auto* nb = app.add_subcommand("nb", "neutral bits")->require_subcommand(1);
    CdOptions ns;
    unsigned ns_max = 2;
    double ns_threshold = 0.98;
    std::string ns_output;
    auto* nb_search = nb->add_subcommand("search", "exhaustive neutral bit / bit-set search");
    ns.add(nb_search);
    nb_search->add_option("--max-size", ns_max, "largest set size (1-3)")->check(CLI::Range(1, 3));
    nb_search->add_option("--threshold", ns_threshold, "minimum neutrality");
    nb_search->add_option("--output,-o", ns_output, "JSON lines file");
    set(nb_search, "nb search", [&](cli::Manifest& m) {
        m.seed(g.seed);
        m.config() = {{"cd_in", ns.in}, {"cd_out", ns.out}, {"cd_rounds", ns.rounds}, {"pairs", ns.pairs},
                      {"max_size", ns_max}, {"threshold", ns_threshold}};
        const auto c = ns.resolve(g.seed, g.threads, m.config());
        CollectOptions co;
        co.threads = g.threads;
        const auto pairs = collect_conforming_pairs(ns.differential(), ns.pairs, g.seed, co);
        LineSink out(ns_output);
        for (const auto& s : search_neutral_bits(ns.differential(), ns_max, pairs, ns_threshold, c, g.threads))
            out.line(to_json_line(s, c, g.seed));
        out.close();
        if (!ns_output.empty())
            m.output(ns_output);
    });

    CdOptions cs;
    cs.in = "0x0300:0x0440";
    cs.rounds = 4;
    std::string cs_candidates = "21;21,5;21,10;21,10,5", cs_left, cs_raw, cs_output;
    double cs_threshold = 0.95;
    auto* nb_csnbs = nb->add_subcommand("csnbs", "conditional neutral bit-set search");
    cs.add(nb_csnbs);
    nb_csnbs->add_option("--candidates", cs_candidates, "bit-sets, e.g. \"21;21,5;23,12\"");
    nb_csnbs->add_option("--left-conditions", cs_left, "condition on left-word bits x[i], e.g. 0,10");
    nb_csnbs->add_option("--conditions", cs_raw, "condition on plaintext bit indices");
    nb_csnbs->add_option("--threshold", cs_threshold, "minimum conditional neutrality");
    nb_csnbs->add_option("--output,-o", cs_output, "JSON lines file");
    set(nb_csnbs, "nb csnbs", [&](cli::Manifest& m) {
        m.seed(g.seed);
        m.config() = {{"cd_in", cs.in}, {"cd_out", cs.out}, {"cd_rounds", cs.rounds}, {"pairs", cs.pairs},
                      {"candidates", cs_candidates}, {"left_conditions", cs_left}, {"conditions", cs_raw},
                      {"threshold", cs_threshold}};
        const auto c = cs.resolve(g.seed, g.threads, m.config());
        std::vector<unsigned> cond = parse_bits(cs_raw);
        for (unsigned i : parse_bits(cs_left))
            cond.push_back(left_word_bit(i, c));
        if (cond.empty())
            throw std::invalid_argument("give --left-conditions or --conditions");
        CollectOptions co;
        co.threads = g.threads;
        const auto pairs = collect_conforming_pairs(cs.differential(), cs.pairs, g.seed, co);
        LineSink out(cs_output);
        for (const auto& s :
             search_csnbs(cs.differential(), parse_bit_sets(cs_candidates), cond, pairs, cs_threshold, c))
            out.line(to_json_line(s, c, g.seed));
        out.close();
        if (!cs_output.empty())
            m.output(cs_output);
    });

    CdOptions nm;
    std::string nm_bits, nm_cond;
    auto* nb_measure = nb->add_subcommand("measure", "neutrality of one bit-set");
    nm.add(nb_measure);
    nb_measure->add_option("--bits", nm_bits, "bits to flip, e.g. 9,24")->required();
    nb_measure->add_option("--left-condition", nm_cond, "left-word conditions i=v, e.g. 2=1,12=0");
    set(nb_measure, "nb measure", [&](cli::Manifest& m) {
        m.seed(g.seed);
        m.config() = {{"cd_in", nm.in}, {"cd_out", nm.out}, {"cd_rounds", nm.rounds}, {"pairs", nm.pairs},
                      {"bits", nm_bits}, {"left_condition", nm_cond}};
        const auto c = nm.resolve(g.seed, g.threads, m.config());
        std::vector<BitCondition> cond;
        std::stringstream ss(nm_cond);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("condition '" + tok + "' is not i=v");
            cond.push_back({left_word_bit(static_cast<unsigned>(std::stoul(tok.substr(0, eq))), c),
                            tok.substr(eq + 1) == "1"});
        }
        CollectOptions co;
        co.threads = g.threads;
        const auto pairs = collect_conforming_pairs(nm.differential(), nm.pairs, g.seed, co);
        std::cout << to_json_line(measure_conditional(parse_bits(nm_bits), cond, nm.differential(), pairs, c), c,
                                  g.seed)
                  << '\n';
    });

    // --- wkrp -----------------------------------------------------------------
    auto* wkrp = app.add_subcommand("wkrp", "wrong-key response profiles")->require_subcommand(1);
    ScorerSource ws;
    ProfileConfig pc;
    std::string wk_diff = "0x0000:0x0040", wk_output, wk_csv;
    auto* wk_compute = wkrp->add_subcommand("compute", "profile over all 2^16 key differences");
    ws.add(wk_compute);
    wk_compute->add_option("--keys", pc.n_keys, "keys per delta")->check(CLI::Range(2U, 1U << 20));
    wk_compute->add_option("--m", pc.m, "pairs per trial (0 = native)");
    wk_compute->add_option("--output,-o", wk_output, "SWKR output file")->required();
    wk_compute->add_option("--csv", wk_csv, "also export delta,mu,sigma");
    set(wk_compute, "wkrp compute", [&](cli::Manifest& m) {
        for (const auto& p : ws.inputs())
            m.input(p);
        const auto d = build_scorer(ws.spec(), g.threads);
        pc.seed = g.seed;
        pc.input_diff = parse_diff(ws.diff);
        pc.threads = g.threads;
        pc.on_progress = [](std::size_t done, std::size_t total) {
            if (done % 8192 == 0)
                std::cerr << "wkrp " << done << "/" << total << '\n';
        };
        m.seed(g.seed);
        m.config() = {{"distinguisher", d->id()}, {"keys", pc.n_keys}, {"m", pc.m}, {"diff", ws.diff}};
        const auto p = compute_profile(*d, pc);
        save_profile(p, wk_output);
        m.output(wk_output);
        if (!wk_csv.empty()) {
            export_profile_csv(p, wk_csv);
            m.output(wk_csv);
        }
        std::cout << json{{"distinguisher", p.distinguisher_id}, {"mu_0", p.mu[0]}, {"n_keys", p.n_keys}}.dump()
                  << '\n';
    });

    // --- attack ---------------------------------------------------------------
    auto* attack = app.add_subcommand("attack", "key recovery")->require_subcommand(1);
    std::string ar_config, ar_output, ar_report;
    unsigned ar_trials = 0;
    double ar_rate = 0;
    auto* attack_run = attack->add_subcommand("run", "run attack trials from a JSON config");
    attack_run->add_option("--config", ar_config, "attack config (JSON)")->required()->check(CLI::ExistingFile);
    attack_run->add_option("--output,-o", ar_output, "per-trial JSON lines")->required();
    attack_run->add_option("--trials", ar_trials, "override the config's trial count");
    attack_run->add_option("--report", ar_report, "complexity report (JSON)");
    attack_run->add_option("--rate", ar_rate, "decryptions per second (default: calibrate)");
    set(attack_run, "attack run", [&](cli::Manifest& m) {
        auto spec = load_attack_spec(ar_config);
        m.input(ar_config);
        if (ar_trials)
            spec.config.trials = ar_trials;
        if (g.seed_given)
            spec.config.seed = g.seed;
        for (const auto* s : {&spec.d_r, &spec.d_r1})
            for (const auto& p : {s->table, s->model, s->profile})
                if (p)
                    m.input(*p);
        m.seed(spec.config.seed);
        m.config() = to_json(spec);
        const auto comp = build_components(spec, g.threads, [](const std::string& s) { std::cerr << s << '\n'; });
        std::mutex mu;
        const auto results = run_trials(spec.config, comp, g.threads, [&](const AttackResult& r) {
            std::cerr << "trial " << r.trial << ": " << (r.success ? "success" : "failure") << " in "
                      << r.rt_seconds << " s\n";
        });
        std::ostringstream lines;
        for (const auto& r : results)
            lines << to_json_line(r) << '\n';
        cli::write_atomic(ar_output, lines.str());
        m.output(ar_output);
        const double rate = ar_rate > 0 ? ar_rate : calibrate_decryption_rate(1.0, 1);
        const auto rep = complexity_report(results, spec.config, rate);
        std::cout << to_table(rep);
        if (!ar_report.empty()) {
            cli::write_atomic(ar_report, to_json(rep) + "\n");
            m.output(ar_report);
        }
    });

    std::string rp_config, rp_results, rp_output;
    double rp_rate = 0;
    auto* attack_report = attack->add_subcommand("report", "complexity report from trial logs");
    attack_report->add_option("--config", rp_config, "attack config (JSON)")->required()->check(CLI::ExistingFile);
    attack_report->add_option("--results", rp_results, "per-trial JSON lines")->required()->check(CLI::ExistingFile);
    attack_report->add_option("--rate", rp_rate, "decryptions per second (default: calibrate)");
    attack_report->add_option("--output,-o", rp_output, "JSON report file");
    set(attack_report, "attack report", [&](cli::Manifest& m) {
        const auto spec = load_attack_spec(rp_config);
        m.input(rp_config);
        m.input(rp_results);
        std::ifstream in(rp_results);
        std::vector<AttackResult> results;
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) {
                try {
                    results.push_back(attack_result_from_json(line));
                } catch (const json::exception& e) {
                    throw FormatError(rp_results + ": " + e.what());
                }
            }
        const double rate = rp_rate > 0 ? rp_rate : calibrate_decryption_rate(1.0, 1);
        const auto rep = complexity_report(results, spec.config, rate);
        m.config() = {{"rate", rate}};
        std::cout << to_table(rep);
        if (!rp_output.empty()) {
            cli::write_atomic(rp_output, to_json(rep) + "\n");
            m.output(rp_output);
        }
    });

    // --- bench ----------------------------------------------------------------
    auto* bench = app.add_subcommand("bench", "benchmarks")->require_subcommand(1);
    double bc_seconds = 1.0;
    auto* bench_cal = bench->add_subcommand("calibrate", "one-round decryptions per second");
    bench_cal->add_option("--seconds", bc_seconds, "measurement time")->check(CLI::PositiveNumber);
    set(bench_cal, "bench calibrate", [&](cli::Manifest& m) {
        const double rate = calibrate_decryption_rate(bc_seconds, g.threads);
        m.config() = {{"seconds", bc_seconds}};
        std::cout << json{{"decryptions_per_second", rate}, {"log2", std::log2(rate)}, {"threads", g.threads}}.dump()
                  << '\n';
    });

    // --- replay -----------------------------------------------------------------
    std::string rl_manifest;
    auto* replay = app.add_subcommand("replay", "rerun the command recorded in a manifest");
    replay->add_option("manifest", rl_manifest, "manifest file")->required()->check(CLI::ExistingFile);
    bool replaying = false;
    replay->callback([&] { replaying = true; });

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0)
            return app.exit(e);
        return report_error("usage", kUsage, e.what());
    }
    g.seed_given = seed_opt->count() > 0;

    if (replaying) {
        std::ifstream in(rl_manifest);
        json j;
        try {
            j = json::parse(in);
            return run(j.at("argv").get<std::vector<std::string>>());
        } catch (const json::exception& e) {
            return report_error("format", kFormat, rl_manifest + ": " + e.what());
        }
    }

    try {
        cli::Manifest manifest(args, command);
        action(manifest);
        std::filesystem::path mpath = g.manifest;
        if (mpath.empty() && !manifest.outputs().empty())
            mpath = manifest.outputs().front().string() + ".manifest.json";
        if (!mpath.empty())
            manifest.write(mpath);
        return kOk;
    } catch (const FormatError& e) {
        return report_error("format", kFormat, e.what());
    } catch (const ResourceError& e) {
        return report_error("resource", kResource, e.what());
    } catch (const std::invalid_argument& e) {
        return report_error("usage", kUsage, e.what());
    } catch (const std::exception& e) {
        return report_error("error", kOther, e.what());
    }
}

}  // namespace

int main(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args);
}
