// Command-line front end: corpus generation, SFT, pair statistics, preference
// alignment, and the diagnostic reports (K buckets, beta sweeps, loss curves,
// gradient checks). Every run writes its fully resolved configuration as
// run_config.json into the output directory.
//
// Exit codes: 0 success, 1 user error, 2 numerical failure.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mipo/analysis.hpp"
#include "mipo/checkpoint.hpp"
#include "mipo/corpus.hpp"
#include "mipo/csv.hpp"
#include "mipo/objectives.hpp"
#include "mipo/rng.hpp"
#include "mipo/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace mipo;

namespace {

struct NumericalFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::uint64_t default_seed() {
    if (const char* env = std::getenv("MIPO_SEED")) {
        char* end = nullptr;
        const auto v = std::strtoull(env, &end, 10);
        if (end && *end == '\0') return v;
        throw std::invalid_argument("MIPO_SEED is not an integer: " + std::string(env));
    }
    return 1;
}

fs::path prepare_out_dir(const std::string& out) {
    fs::path dir(out);
    fs::create_directories(dir);
    return dir;
}

void write_run_config(const fs::path& dir, const std::string& subcommand, const json& cfg) {
    json j;
    j["subcommand"] = subcommand;
    j["config"] = cfg;
    std::ofstream os(dir / "run_config.json", std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + (dir / "run_config.json").string());
    os << j.dump(2) << "\n";
}

void require_positive_beta(double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("beta must be > 0");
}

std::vector<data::PreferencePair> load_pairs(const std::string& path) {
    if (!fs::exists(path)) throw std::invalid_argument("input file not found: " + path);
    return data::read_jsonl(path);
}

lm::TinyLm load_reference(const std::string& path) {
    if (!fs::exists(path)) throw std::invalid_argument("checkpoint not found: " + path);
    return lm::load_checkpoint(path);
}

// ---- gen-data ------------------------------------------------------------

struct GenArgs {
    std::string out;
    data::CorpusSpec spec;
};

int run_gen_data(const GenArgs& a) {
    auto pairs = data::generate_corpus(a.spec);
    const auto dir = prepare_out_dir(a.out);
    data::write_jsonl(pairs, dir / "pairs.jsonl");
    json cfg;
    cfg["n_pairs"] = a.spec.n_pairs;
    cfg["prompt_len_min"] = a.spec.prompt_len_min;
    cfg["prompt_len_max"] = a.spec.prompt_len_max;
    cfg["response_len_min"] = a.spec.response_len_min;
    cfg["response_len_max"] = a.spec.response_len_max;
    cfg["corrupt_low"] = a.spec.corrupt_low;
    cfg["corrupt_high"] = a.spec.corrupt_high;
    cfg["high_fraction"] = a.spec.high_fraction;
    cfg["alt_rule_fraction"] = a.spec.alt_rule_fraction;
    cfg["max_encoded_len"] = a.spec.max_encoded_len;
    cfg["seed"] = a.spec.seed;
    write_run_config(dir, "gen-data", cfg);
    std::cout << "wrote " << pairs.size() << " pairs to " << (dir / "pairs.jsonl").string()
              << "\n";
    return 0;
}

// ---- sft -------------------------------------------------------------------

struct SftArgs {
    std::string data;
    std::string out;
    lm::ModelConfig model;
    train::SftConfig cfg;
};

int run_sft(const SftArgs& a) {
    auto pairs = load_pairs(a.data);
    lm::TinyLm model(a.model);
    auto losses = train::train_sft(model, pairs, a.cfg);
    const auto dir = prepare_out_dir(a.out);
    lm::save_checkpoint(dir / "reference.ckpt", model);
    {
        csv::Writer w(dir / "sft_log.csv", {"step", "loss"});
        for (std::size_t i = 0; i < losses.size(); ++i)
            w.row({csv::format(static_cast<std::int64_t>(i)), csv::format(losses[i])});
        w.close();
    }
    json cfg;
    cfg["data"] = a.data;
    cfg["steps"] = a.cfg.steps;
    cfg["batch_size"] = a.cfg.batch_size;
    cfg["learning_rate"] = a.cfg.learning_rate;
    cfg["warmup_steps"] = a.cfg.warmup_steps;
    cfg["seed"] = a.cfg.seed;
    cfg["d_model"] = a.model.d_model;
    cfg["n_layers"] = a.model.n_layers;
    cfg["context_len"] = a.model.context_len;
    cfg["vocab_size"] = a.model.vocab_size;
    write_run_config(dir, "sft", cfg);
    std::cout << "sft: " << losses.size() << " steps, loss " << (losses.empty() ? 0.0 : losses.front())
              << " -> " << (losses.empty() ? 0.0 : losses.back()) << "\n"
              << "checkpoint: " << (dir / "reference.ckpt").string() << "\n";
    return 0;
}

// ---- stats -----------------------------------------------------------------

struct StatsArgs {
    std::string ref;
    std::string data;
    std::string out;
};

int run_stats(const StatsArgs& a) {
    auto pairs = load_pairs(a.data);
    auto reference = load_reference(a.ref);
    const auto hash = lm::checkpoint_hash(a.ref);
    const auto dir = prepare_out_dir(a.out);
    bool cache_hit = false;
    auto entries = train::pair_stats_with_cache(reference, hash, pairs,
                                                dir / "pair_stats.jsonl", &cache_hit);
    json cfg;
    cfg["ref"] = a.ref;
    cfg["checkpoint_hash"] = hash;
    cfg["data"] = a.data;
    cfg["n_pairs"] = pairs.size();
    write_run_config(dir, "stats", cfg);
    double kmin = 0.0, kmax = 0.0;
    if (!entries.empty()) {
        kmin = kmax = entries.front().stats.k;
        for (const auto& e : entries) {
            kmin = std::min(kmin, e.stats.k);
            kmax = std::max(kmax, e.stats.k);
        }
    }
    std::cout << "stats: " << entries.size() << " pairs (" << (cache_hit ? "cached" : "computed")
              << "), K in [" << kmin << ", " << kmax << "]\n";
    return 0;
}

// ---- align -----------------------------------------------------------------

struct AlignArgs {
    std::string ref;
    std::string data;
    std::string out;
    std::string stats;  // optional sidecar path
    std::string method = "mipo";
    double beta = 10.0;
    double lr = 1e-4;
    int steps = 0;  // 0 = one epoch
    int batch = 16;
    std::uint64_t seed = 0;
    double eval_frac = 0.2;
    std::uint64_t split_seed = 0;
    std::optional<double> gamma;
};

json align_config_json(const AlignArgs& a, const train::AlignConfig& cfg,
                       const std::string& hash, std::size_t n_train, std::size_t n_eval) {
    json j;
    j["ref"] = a.ref;
    j["checkpoint_hash"] = hash;
    j["data"] = a.data;
    j["method"] = train::method_name(cfg.method);
    j["beta"] = cfg.beta;
    j["learning_rate"] = cfg.learning_rate;
    j["steps"] = cfg.steps;
    j["batch_size"] = cfg.batch_size;
    j["seed"] = cfg.seed;
    j["warmup_steps"] = cfg.warmup_steps;
    j["grad_norm_abort"] = cfg.grad_norm_abort;
    if (cfg.gamma) j["gamma"] = *cfg.gamma;
    j["eval_fraction"] = a.eval_frac;
    j["split_seed"] = a.split_seed;
    j["n_train"] = n_train;
    j["n_eval"] = n_eval;
    return j;
}

int run_align(AlignArgs a) {
    require_positive_beta(a.beta);
    auto pairs = load_pairs(a.data);
    auto reference = load_reference(a.ref);
    const auto hash = lm::checkpoint_hash(a.ref);
    if (a.split_seed == 0) a.split_seed = a.seed;
    auto [tr, ev] = data::split(pairs, a.eval_frac, a.split_seed);

    const auto dir = prepare_out_dir(a.out);
    const fs::path stats_path = a.stats.empty() ? (dir / "pair_stats.jsonl") : fs::path(a.stats);
    auto entries = train::pair_stats_with_cache(reference, hash, pairs, stats_path, nullptr);

    train::AlignConfig cfg;
    cfg.method = train::parse_method(a.method);
    cfg.beta = a.beta;
    cfg.learning_rate = a.lr;
    cfg.batch_size = a.batch;
    cfg.seed = a.seed;
    cfg.gamma = a.gamma;
    cfg.steps = a.steps > 0
                    ? a.steps
                    : std::max<int>(1, static_cast<int>(tr.size()) / std::max(1, a.batch));
    cfg.validate();

    lm::TinyLm policy = reference.clone();
    auto log = train::train_align(policy, tr, entries, ev, entries, cfg);

    lm::save_checkpoint(dir / "policy.ckpt", policy);
    train::write_step_log(dir / "train_steps.csv", log);
    train::write_eval_log(dir / "train_eval.csv", log);
    write_run_config(dir, "align", align_config_json(a, cfg, hash, tr.size(), ev.size()));
    std::cout << "align[" << train::method_name(cfg.method) << "]: " << cfg.steps
              << " steps, loss " << log.steps.front().mean_loss << " -> "
              << log.steps.back().mean_loss << "\n"
              << "checkpoint: " << (dir / "policy.ckpt").string() << "\n";
    return 0;
}

// ---- analyze-k ---------------------------------------------------------------

struct AnalyzeArgs {
    std::string eval_log;
    std::string out;
};

int run_analyze_k(const AnalyzeArgs& a) {
    if (!fs::exists(a.eval_log))
        throw std::invalid_argument("input file not found: " + a.eval_log);
    auto evals = train::read_eval_log(a.eval_log);
    if (evals.empty()) throw std::invalid_argument("eval log is empty: " + a.eval_log);
    int last = 0;
    for (const auto& e : evals) last = std::max(last, e.epoch);
    if (last == 0)
        throw std::invalid_argument("eval log has no post-training epoch: " + a.eval_log);
    std::map<std::string, double> before, after, ks;
    for (const auto& e : evals) {
        if (e.epoch == 0) {
            before[e.pair_id] = e.policy_margin;
            ks[e.pair_id] = e.k;
        }
        if (e.epoch == last) after[e.pair_id] = e.policy_margin;
    }
    auto reports = analysis::analyze_k(before, after, ks);
    const auto dir = prepare_out_dir(a.out);
    analysis::write_bucket_csv(dir / "k_buckets.csv", reports);
    json cfg;
    cfg["eval_log"] = a.eval_log;
    cfg["before_epoch"] = 0;
    cfg["after_epoch"] = last;
    cfg["aggregation"] = "mean";
    write_run_config(dir, "analyze-k", cfg);
    for (const auto& r : reports)
        std::cout << r.bucket << ": n=" << r.n << " mean_k=" << r.mean_k
                  << " delta=" << r.delta << "\n";
    return 0;
}

// ---- losscurve ----------------------------------------------------------------

struct LossCurveArgs {
    std::string out;
    double beta = 1.0;
    std::vector<double> ks = {-5.0, -2.0, 0.0, 1.0, 3.0, 10.0};
    double f_min = -6.0;
    double f_max = 12.0;
    int points = 181;
};

int run_losscurve(const LossCurveArgs& a) {
    require_positive_beta(a.beta);
    auto points = analysis::losscurve(a.beta, a.ks, a.f_min, a.f_max, a.points);
    const auto dir = prepare_out_dir(a.out);
    analysis::write_losscurve_csv(dir / "losscurve.csv", points);
    json cfg;
    cfg["beta"] = a.beta;
    cfg["k_values"] = a.ks;
    cfg["f_min"] = a.f_min;
    cfg["f_max"] = a.f_max;
    cfg["points"] = a.points;
    write_run_config(dir, "losscurve", cfg);
    std::cout << "wrote " << points.size() << " rows to " << (dir / "losscurve.csv").string()
              << "\n";
    return 0;
}

// ---- sweep-beta ------------------------------------------------------------------

struct SweepArgs {
    AlignArgs align;
    std::vector<double> betas = {1.0, 5.0, 10.0, 25.0, 50.0};
};

std::string beta_dir_name(double beta) {
    std::string s = "beta_" + csv::format(beta);
    for (auto& c : s)
        if (c == '.') c = 'p';
    return s;
}

int run_sweep(const SweepArgs& s) {
    const auto& a = s.align;
    for (double b : s.betas) require_positive_beta(b);
    auto pairs = load_pairs(a.data);
    auto reference = load_reference(a.ref);
    const auto hash = lm::checkpoint_hash(a.ref);
    const auto split_seed = a.split_seed == 0 ? a.seed : a.split_seed;
    auto [tr, ev] = data::split(pairs, a.eval_frac, split_seed);

    const auto dir = prepare_out_dir(a.out);
    const fs::path stats_path = a.stats.empty() ? (dir / "pair_stats.jsonl") : fs::path(a.stats);
    auto entries = train::pair_stats_with_cache(reference, hash, pairs, stats_path, nullptr);

    train::AlignConfig base;
    base.method = train::parse_method(a.method);
    base.learning_rate = a.lr;
    base.batch_size = a.batch;
    base.seed = a.seed;
    base.gamma = a.gamma;
    base.steps = a.steps > 0
                     ? a.steps
                     : std::max<int>(1, static_cast<int>(tr.size()) / std::max(1, a.batch));

    auto results = analysis::sweep_beta(reference, tr, entries, ev, entries, base, s.betas);
    std::vector<analysis::SweepRow> rows;
    for (const auto& r : results) {
        rows.push_back(r.row);
        const auto bdir = dir / beta_dir_name(r.row.beta);
        fs::create_directories(bdir);
        if (!r.row.diverged) {
            lm::save_checkpoint(bdir / "policy.ckpt", r.policy);
            train::write_step_log(bdir / "train_steps.csv", r.log);
            train::write_eval_log(bdir / "train_eval.csv", r.log);
        }
    }
    analysis::write_sweep_csv(dir / "sweep.csv", rows);

    train::AlignConfig cfg_for_json = base;
    json cfg = align_config_json(a, cfg_for_json, hash, tr.size(), ev.size());
    cfg.erase("beta");
    cfg["betas"] = s.betas;
    write_run_config(dir, "sweep-beta", cfg);
    for (const auto& r : rows)
        std::cout << "beta " << r.beta << ": final loss " << r.final_mean_train_loss
                  << (r.diverged ? " (diverged)" : "") << "\n";
    for (const auto& r : rows)
        if (r.diverged) return 2;
    return 0;
}

// ---- gradcheck -----------------------------------------------------------------

struct GradcheckArgs {
    std::uint64_t seed = 0;
    int trials = 5;
    int samples = 12;
    double tolerance = 1e-4;
    std::string out;  // optional
};

int run_gradcheck(const GradcheckArgs& a) {
    if (!(a.tolerance > 0.0)) throw std::invalid_argument("tolerance must be > 0");
    const auto& vocab = lm::Vocab::standard();
    double worst = 0.0;
    for (int trial = 0; trial < a.trials; ++trial) {
        const std::uint64_t seed = mix_seed(a.seed, static_cast<std::uint64_t>(trial));
        lm::ModelConfig mc;
        mc.d_model = 16;
        mc.n_layers = 2;
        mc.context_len = 48;
        mc.vocab_size = vocab.size();
        mc.seed = seed;
        lm::TinyLm model(mc, lm::TinyLm::HeadInit::Random);

        data::CorpusSpec spec;
        spec.n_pairs = 4;
        spec.seed = seed;
        auto pairs = data::generate_corpus(spec);
        auto stats = train::precompute_pair_stats(model, pairs);
        auto tokens = train::tokenize_pairs(vocab, pairs);

        auto batch_loss = [&](diff::Graph& g) {
            std::vector<diff::Tensor> losses;
            for (std::size_t i = 0; i < tokens.size(); ++i) {
                auto sw = model.response_loglik_sum(g, tokens[i].prompt, tokens[i].chosen);
                auto sl = model.response_loglik_sum(g, tokens[i].prompt, tokens[i].rejected);
                auto f = g.add(g.affine(sw, 1.0 / stats[i].stats.ref_w.n_tokens, 0.0),
                               g.affine(sl, -1.0 / stats[i].stats.ref_l.n_tokens, 0.0));
                losses.push_back(obj::mipo_loss(g, f, stats[i].stats.k, 10.0));
            }
            return g.mean(g.stack_rows(losses));
        };
        auto eval = [&] {
            diff::Graph g;
            return batch_loss(g).item();
        };

        model.zero_grads();
        {
            diff::Graph g;
            g.backward(batch_loss(g));
        }

        Rng rng(seed);
        auto names = model.param_names();
        for (int s = 0; s < a.samples; ++s) {
            auto& p = model.param(names[rng.below(names.size())]);
            const auto idx =
                static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(p.numel())));
            const double analytic = p.grad()[idx];
            auto vals = p.values();
            const double saved = vals[idx];
            const double h = 1e-4;
            vals[idx] = saved + h;
            const double up = eval();
            vals[idx] = saved - h;
            const double down = eval();
            vals[idx] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double diff = std::abs(analytic - fd);
            const double rel =
                diff == 0.0 ? 0.0 : diff / std::max({std::abs(analytic), std::abs(fd), 1e-6});
            worst = std::max(worst, rel);
        }
    }
    std::cout << "gradcheck: max relative gradient error " << worst << " (tolerance "
              << a.tolerance << ")\n";
    if (!a.out.empty()) {
        const auto dir = prepare_out_dir(a.out);
        json cfg;
        cfg["seed"] = a.seed;
        cfg["trials"] = a.trials;
        cfg["samples"] = a.samples;
        cfg["tolerance"] = a.tolerance;
        cfg["max_rel_error"] = worst;
        write_run_config(dir, "gradcheck", cfg);
    }
    if (worst >= a.tolerance)
        throw NumericalFailure("gradient check failed: max relative error " +
                               std::to_string(worst) + " >= " + std::to_string(a.tolerance));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Preference-optimization laboratory on a tiny character-level LM"};
    app.require_subcommand(1);
    app.footer("Environment: MIPO_SEED overrides the default seed (1) for all subcommands.");

    std::uint64_t env_seed;
    try {
        env_seed = default_seed();
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    GenArgs gen;
    gen.spec.seed = env_seed;
    auto* cgen = app.add_subcommand("gen-data", "Generate a synthetic preference corpus");
    cgen->add_option("--out", gen.out, "Output directory")->required();
    cgen->add_option("--n", gen.spec.n_pairs, "Number of pairs");
    cgen->add_option("--prompt-min", gen.spec.prompt_len_min, "Min prompt length");
    cgen->add_option("--prompt-max", gen.spec.prompt_len_max, "Max prompt length");
    cgen->add_option("--resp-min", gen.spec.response_len_min, "Min response length");
    cgen->add_option("--resp-max", gen.spec.response_len_max, "Max response length");
    cgen->add_option("--corrupt-low", gen.spec.corrupt_low, "Low corruption rate");
    cgen->add_option("--corrupt-high", gen.spec.corrupt_high, "High corruption rate");
    cgen->add_option("--high-frac", gen.spec.high_fraction, "Share corrupted at the high rate");
    cgen->add_option("--alt-frac", gen.spec.alt_rule_fraction,
                     "Share of prompts under the marked second rule");
    cgen->add_option("--seed", gen.spec.seed, "Generation seed");

    SftArgs sft;
    sft.cfg.seed = env_seed;
    sft.model.seed = env_seed;
    auto* csft = app.add_subcommand("sft", "Train the reference model on chosen responses");
    csft->add_option("--data", sft.data, "pairs.jsonl path")->required();
    csft->add_option("--out", sft.out, "Output directory")->required();
    csft->add_option("--steps", sft.cfg.steps, "Optimizer steps");
    csft->add_option("--batch", sft.cfg.batch_size, "Batch size");
    csft->add_option("--lr", sft.cfg.learning_rate, "Learning rate");
    csft->add_option("--seed", sft.cfg.seed, "Training seed (also the init seed)");
    csft->add_option("--d-model", sft.model.d_model, "Embedding width");
    csft->add_option("--layers", sft.model.n_layers, "Recurrent block count");
    csft->add_option("--context", sft.model.context_len, "Context length");

    StatsArgs stats;
    auto* cstats = app.add_subcommand("stats", "Reference-model statistics per pair");
    cstats->add_option("--ref", stats.ref, "Reference checkpoint")->required();
    cstats->add_option("--data", stats.data, "pairs.jsonl path")->required();
    cstats->add_option("--out", stats.out, "Output directory")->required();

    AlignArgs align;
    align.seed = env_seed;
    auto* calign = app.add_subcommand("align", "Preference-optimize a policy model");
    calign->add_option("--ref", align.ref, "Reference checkpoint")->required();
    calign->add_option("--data", align.data, "pairs.jsonl path")->required();
    calign->add_option("--out", align.out, "Output directory")->required();
    calign->add_option("--stats", align.stats, "Pair-stats sidecar (default: out dir cache)");
    calign->add_option("--method", align.method, "mipo | dpo | simpo");
    calign->add_option("--beta", align.beta, "Temperature");
    calign->add_option("--lr", align.lr, "Learning rate");
    calign->add_option("--steps", align.steps, "Optimizer steps (0 = one epoch)");
    calign->add_option("--batch", align.batch, "Batch size");
    calign->add_option("--seed", align.seed, "Training seed");
    calign->add_option("--eval-frac", align.eval_frac, "Eval split fraction");
    calign->add_option("--split-seed", align.split_seed, "Split seed (default: --seed)");
    double gamma_val = 0.0;
    auto* gamma_opt = calign->add_option("--gamma", gamma_val, "SimPO margin");

    AnalyzeArgs analyze;
    auto* canalyze = app.add_subcommand("analyze-k", "Bucket policy-margin changes by K");
    canalyze->add_option("--eval-log", analyze.eval_log, "train_eval.csv from align")
        ->required();
    canalyze->add_option("--out", analyze.out, "Output directory")->required();

    SweepArgs sweep;
    sweep.align.seed = env_seed;
    auto* csweep = app.add_subcommand("sweep-beta", "Run alignment across a list of betas");
    csweep->add_option("--ref", sweep.align.ref, "Reference checkpoint")->required();
    csweep->add_option("--data", sweep.align.data, "pairs.jsonl path")->required();
    csweep->add_option("--out", sweep.align.out, "Output directory")->required();
    csweep->add_option("--stats", sweep.align.stats, "Pair-stats sidecar");
    csweep->add_option("--method", sweep.align.method, "mipo | dpo | simpo");
    csweep->add_option("--betas", sweep.betas, "Betas to sweep")->delimiter(',');
    csweep->add_option("--lr", sweep.align.lr, "Learning rate");
    csweep->add_option("--steps", sweep.align.steps, "Optimizer steps (0 = one epoch)");
    csweep->add_option("--batch", sweep.align.batch, "Batch size");
    csweep->add_option("--seed", sweep.align.seed, "Training seed");
    csweep->add_option("--eval-frac", sweep.align.eval_frac, "Eval split fraction");
    csweep->add_option("--split-seed", sweep.align.split_seed, "Split seed (default: --seed)");

    LossCurveArgs curve;
    auto* ccurve = app.add_subcommand("losscurve", "Tabulate the loss over an f grid per K");
    ccurve->add_option("--out", curve.out, "Output directory")->required();
    ccurve->add_option("--beta", curve.beta, "Temperature");
    ccurve->add_option("--k", curve.ks, "K values")->delimiter(',');
    ccurve->add_option("--f-min", curve.f_min, "Grid start");
    ccurve->add_option("--f-max", curve.f_max, "Grid end");
    ccurve->add_option("--points", curve.points, "Grid points");

    GradcheckArgs grad;
    grad.seed = env_seed;
    auto* cgrad = app.add_subcommand("gradcheck",
                                     "Analytic vs finite-difference gradients end to end");
    cgrad->add_option("--seed", grad.seed, "Base seed");
    cgrad->add_option("--trials", grad.trials, "Model/data draws");
    cgrad->add_option("--samples", grad.samples, "Sampled coordinates per trial");
    cgrad->add_option("--tolerance", grad.tolerance, "Max allowed relative error");
    cgrad->add_option("--out", grad.out, "Optional output directory for the report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gamma_opt->count()) align.gamma = gamma_val;
        if (*cgen) return run_gen_data(gen);
        if (*csft) return run_sft(sft);
        if (*cstats) return run_stats(stats);
        if (*calign) return run_align(align);
        if (*canalyze) return run_analyze_k(analyze);
        if (*csweep) return run_sweep(sweep);
        if (*ccurve) return run_losscurve(curve);
        if (*cgrad) return run_gradcheck(grad);
    } catch (const train::TrainingDiverged& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
