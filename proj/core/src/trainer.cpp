#include "mipo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mipo/csv.hpp"
#include "mipo/rng.hpp"

namespace mipo::train {

using diff::Graph;
using diff::Tensor;
using json = nlohmann::ordered_json;

Method parse_method(std::string_view name) {
    std::string s(name);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "mipo") return Method::Mipo;
    if (s == "dpo") return Method::Dpo;
    if (s == "simpo") return Method::Simpo;
    throw std::invalid_argument("unknown method: " + std::string(name) +
                                " (expected mipo, dpo, or simpo)");
}

const char* method_name(Method m) {
    switch (m) {
        case Method::Mipo: return "mipo";
        case Method::Dpo: return "dpo";
        case Method::Simpo: return "simpo";
    }
    return "unknown";
}

void AlignConfig::validate() const {
    if (!(beta > 0.0)) throw std::invalid_argument("beta must be > 0");
    if (steps < 1) throw std::invalid_argument("steps must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
    if (gamma.has_value() && method != Method::Simpo)
        throw std::invalid_argument("gamma is only valid with method simpo");
    if (gamma.has_value() && *gamma < 0.0) throw std::invalid_argument("gamma must be >= 0");
}

Adam::Adam(double learning_rate, int warmup_steps)
    : lr_(learning_rate), warmup_(std::max(warmup_steps, 1)) {}

void Adam::step(lm::TinyLm& model) {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    ++t_;
    const double lr = lr_ * std::min(1.0, static_cast<double>(t_) / warmup_);
    const double bc1 = 1.0 - std::pow(kBeta1, t_);
    const double bc2 = 1.0 - std::pow(kBeta2, t_);
    for (auto& [name, p] : model.params()) {
        auto& [m, v] = state_[name];
        const auto n = static_cast<std::size_t>(p.numel());
        if (m.size() != n) {
            m.assign(n, 0.0);
            v.assign(n, 0.0);
        }
        auto vals = p.values();
        auto grad = p.grad();
        for (std::size_t i = 0; i < n; ++i) {
            const double g = grad[i];
            m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g;
            v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g * g;
            vals[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kEps);
        }
    }
}

std::vector<TokenizedPair> tokenize_pairs(const lm::Vocab& vocab,
                                          const std::vector<data::PreferencePair>& pairs) {
    std::vector<TokenizedPair> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        TokenizedPair t;
        t.id = p.id;
        t.prompt = vocab.encode(p.prompt);
        t.chosen = vocab.encode(p.chosen);
        t.rejected = vocab.encode(p.rejected);
        out.push_back(std::move(t));
    }
    return out;
}

namespace {

double grad_norm(lm::TinyLm& model) {
    double sq = 0.0;
    for (auto& [name, p] : model.params())
        for (double g : p.grad()) sq += g * g;
    return std::sqrt(sq);
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(mix_seed(seed, 0xE90C + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n - 1; i >= 1; --i) {
        const auto j = rng.below(i + 1);
        std::swap(order[i], order[j]);
    }
    return order;
}

void check_step_health(int step, double loss, double norm, double ceiling) {
    if (!std::isfinite(loss))
        throw TrainingDiverged(step, "training diverged at step " + std::to_string(step) +
                                         ": loss is not finite");
    if (!std::isfinite(norm) || norm > ceiling)
        throw TrainingDiverged(step, "training diverged at step " + std::to_string(step) +
                                         ": gradient norm " + std::to_string(norm) +
                                         " exceeds ceiling " + std::to_string(ceiling));
}

}  // namespace

std::vector<double> train_sft(lm::TinyLm& model, const std::vector<data::PreferencePair>& corpus,
                              const SftConfig& cfg) {
    if (corpus.empty()) throw std::invalid_argument("train_sft: empty corpus");
    if (cfg.steps < 0) throw std::invalid_argument("train_sft: steps must be >= 0");
    const auto& vocab = lm::Vocab::standard();
    auto tokens = tokenize_pairs(vocab, corpus);
    const auto n = tokens.size();
    const auto batch_size = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);

    Adam opt(cfg.learning_rate, cfg.warmup_steps);
    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(cfg.steps));

    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    int epoch = 0;
    for (int step = 0; step < cfg.steps; ++step) {
        if (cursor + batch_size > n || order.empty()) {
            order = epoch_permutation(n, cfg.seed, epoch++);
            cursor = 0;
        }
        std::vector<std::pair<std::vector<int>, std::vector<int>>> batch;
        batch.reserve(batch_size);
        for (std::size_t b = 0; b < batch_size; ++b) {
            const auto& t = tokens[order[cursor + b]];
            batch.emplace_back(t.prompt, t.chosen);
        }
        cursor += batch_size;

        model.zero_grads();
        Graph g;
        Tensor loss = model.sft_loss(g, batch);
        g.backward(loss);
        const double norm = grad_norm(model);
        check_step_health(step, loss.item(), norm, cfg.grad_norm_abort);
        opt.step(model);
        losses.push_back(loss.item());
    }
    return losses;
}

std::vector<PairStatsEntry> precompute_pair_stats(
    const lm::TinyLm& reference, const std::vector<data::PreferencePair>& pairs) {
    const auto& vocab = lm::Vocab::standard();
    auto tokens = tokenize_pairs(vocab, pairs);
    std::vector<PairStatsEntry> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) {
        PairStatsEntry e;
        e.id = t.id;
        const auto ref_w = reference.sequence_loglik(t.prompt, t.chosen);
        const auto ref_l = reference.sequence_loglik(t.prompt, t.rejected);
        e.stats = obj::make_pair_stats(ref_w, ref_l);
        out.push_back(std::move(e));
    }
    return out;
}

void save_pair_stats(const std::filesystem::path& path, const std::string& checkpoint_hash,
                     const std::vector<PairStatsEntry>& entries) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
    json header;
    header["checkpoint_hash"] = checkpoint_hash;
    header["n"] = entries.size();
    os << header.dump() << "\n";
    for (const auto& e : entries) {
        json j;
        j["id"] = e.id;
        j["sum_w"] = e.stats.ref_w.sum_logp;
        j["n_w"] = e.stats.ref_w.n_tokens;
        j["sum_l"] = e.stats.ref_l.sum_logp;
        j["n_l"] = e.stats.ref_l.n_tokens;
        j["k"] = e.stats.k;
        os << j.dump() << "\n";
    }
    if (!os) throw std::runtime_error("failed writing " + path.string());
}

namespace {

std::optional<std::vector<PairStatsEntry>> try_load_pair_stats(
    const std::filesystem::path& path, const std::string& expected_hash) {
    std::ifstream is(path, std::ios::binary);
    if (!is) return std::nullopt;
    std::string line;
    if (!std::getline(is, line)) return std::nullopt;
    json header;
    try {
        header = json::parse(line);
    } catch (const json::parse_error&) {
        return std::nullopt;
    }
    if (!header.contains("checkpoint_hash") ||
        header["checkpoint_hash"].get<std::string>() != expected_hash)
        return std::nullopt;
    std::vector<PairStatsEntry> out;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error&) {
            return std::nullopt;
        }
        PairStatsEntry e;
        try {
            e.id = j.at("id").get<std::string>();
            e.stats.ref_w.sum_logp = j.at("sum_w").get<double>();
            e.stats.ref_w.n_tokens = j.at("n_w").get<int>();
            e.stats.ref_l.sum_logp = j.at("sum_l").get<double>();
            e.stats.ref_l.n_tokens = j.at("n_l").get<int>();
            e.stats.k = j.at("k").get<double>();
        } catch (const json::exception&) {
            return std::nullopt;
        }
        e.stats.ref_w.avg_logp = e.stats.ref_w.sum_logp / e.stats.ref_w.n_tokens;
        e.stats.ref_l.avg_logp = e.stats.ref_l.sum_logp / e.stats.ref_l.n_tokens;
        if (e.stats.k != obj::compute_k(e.stats.ref_w, e.stats.ref_l)) return std::nullopt;
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace

std::vector<PairStatsEntry> pair_stats_with_cache(const lm::TinyLm& reference,
                                                  const std::string& checkpoint_hash,
                                                  const std::vector<data::PreferencePair>& pairs,
                                                  const std::filesystem::path& cache_path,
                                                  bool* cache_hit) {
    if (auto cached = try_load_pair_stats(cache_path, checkpoint_hash)) {
        std::set<std::string> have;
        for (const auto& e : *cached) have.insert(e.id);
        bool covers = true;
        for (const auto& p : pairs)
            if (!have.count(p.id)) {
                covers = false;
                break;
            }
        if (covers) {
            if (cache_hit) *cache_hit = true;
            // keep only the requested pairs, in request order
            std::map<std::string, PairStatsEntry> by_id;
            for (auto& e : *cached) by_id[e.id] = std::move(e);
            std::vector<PairStatsEntry> out;
            out.reserve(pairs.size());
            for (const auto& p : pairs) out.push_back(by_id.at(p.id));
            return out;
        }
    }
    if (std::filesystem::exists(cache_path))
        std::cerr << "warning: pair-stats cache " << cache_path.string()
                  << " does not match checkpoint " << checkpoint_hash << "; recomputing\n";
    if (cache_hit) *cache_hit = false;
    auto entries = precompute_pair_stats(reference, pairs);
    save_pair_stats(cache_path, checkpoint_hash, entries);
    return entries;
}

namespace {

struct StatsIndex {
    std::map<std::string, const obj::PairStats*> by_id;

    static StatsIndex build(const std::vector<PairStatsEntry>& entries) {
        StatsIndex idx;
        for (const auto& e : entries) idx.by_id[e.id] = &e.stats;
        return idx;
    }

    const obj::PairStats& require(const std::string& id) const {
        auto it = by_id.find(id);
        if (it == by_id.end())
            throw std::invalid_argument("pair stats missing for id " + id);
        return *it->second;
    }
};

void require_coverage(const std::vector<TokenizedPair>& pairs, const StatsIndex& idx,
                      const char* what) {
    std::vector<std::string> missing;
    for (const auto& p : pairs)
        if (!idx.by_id.count(p.id)) missing.push_back(p.id);
    if (!missing.empty()) {
        std::ostringstream os;
        os << what << " stats do not cover all pairs; missing:";
        for (const auto& id : missing) os << " " << id;
        throw std::invalid_argument(os.str());
    }
}

std::vector<EvalRecord> eval_margins(const lm::TinyLm& policy,
                                     const std::vector<TokenizedPair>& eval_pairs,
                                     const StatsIndex& stats, int epoch) {
    std::vector<EvalRecord> out;
    out.reserve(eval_pairs.size());
    for (const auto& t : eval_pairs) {
        const auto w = policy.sequence_loglik(t.prompt, t.chosen);
        const auto l = policy.sequence_loglik(t.prompt, t.rejected);
        EvalRecord r;
        r.epoch = epoch;
        r.pair_id = t.id;
        r.k = stats.require(t.id).k;
        r.policy_margin = w.avg_logp - l.avg_logp;
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

TrainLog train_align(lm::TinyLm& policy, const std::vector<data::PreferencePair>& train_pairs,
                     const std::vector<PairStatsEntry>& train_stats,
                     const std::vector<data::PreferencePair>& eval_pairs,
                     const std::vector<PairStatsEntry>& eval_stats, const AlignConfig& cfg) {
    cfg.validate();
    if (train_pairs.empty()) throw std::invalid_argument("train_align: empty training set");
    const auto& vocab = lm::Vocab::standard();
    auto train_tok = tokenize_pairs(vocab, train_pairs);
    auto eval_tok = tokenize_pairs(vocab, eval_pairs);
    const auto train_idx = StatsIndex::build(train_stats);
    const auto eval_idx = StatsIndex::build(eval_stats);
    require_coverage(train_tok, train_idx, "training");
    require_coverage(eval_tok, eval_idx, "eval");

    const double gamma = cfg.gamma.value_or(0.0);
    const auto n = train_tok.size();
    const auto batch_size = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
    // the batch cursor reshuffles instead of taking a partial batch
    const auto steps_per_epoch = static_cast<int>(std::max<std::size_t>(1, n / batch_size));

    TrainLog log;
    auto init_eval = eval_margins(policy, eval_tok, eval_idx, 0);
    log.evals.insert(log.evals.end(), init_eval.begin(), init_eval.end());

    Adam opt(cfg.learning_rate, cfg.warmup_steps);
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    int epoch = 0;
    int completed_epochs = 0;

    for (int step = 0; step < cfg.steps; ++step) {
        if (cursor + batch_size > n || order.empty()) {
            order = epoch_permutation(n, cfg.seed, epoch++);
            cursor = 0;
        }

        policy.zero_grads();
        Graph g;
        std::vector<Tensor> losses;
        losses.reserve(batch_size);
        double sum_f = 0.0, sum_dpo_margin = 0.0;
        for (std::size_t b = 0; b < batch_size; ++b) {
            const auto& t = train_tok[order[cursor + b]];
            const auto& st = train_idx.require(t.id);
            Tensor sum_w = policy.response_loglik_sum(g, t.prompt, t.chosen);
            Tensor sum_l = policy.response_loglik_sum(g, t.prompt, t.rejected);
            const double inv_nw = 1.0 / st.ref_w.n_tokens;
            const double inv_nl = 1.0 / st.ref_l.n_tokens;

            Tensor loss;
            if (cfg.method == Method::Dpo) {
                loss = obj::dpo_loss(g, sum_w, sum_l, st.ref_w.sum_logp, st.ref_l.sum_logp,
                                     cfg.beta);
            } else {
                Tensor f = g.add(g.affine(sum_w, inv_nw, 0.0), g.affine(sum_l, -inv_nl, 0.0));
                loss = (cfg.method == Method::Mipo)
                           ? obj::mipo_loss(g, f, st.k, cfg.beta)
                           : obj::simpo_loss(g, f, cfg.beta, gamma);
            }
            losses.push_back(loss);

            sum_f += sum_w.item() * inv_nw - sum_l.item() * inv_nl;
            sum_dpo_margin += (sum_w.item() - st.ref_w.sum_logp) -
                              (sum_l.item() - st.ref_l.sum_logp);
        }
        cursor += batch_size;

        Tensor batch_loss = g.mean(g.stack_rows(losses));
        g.backward(batch_loss);
        const double norm = grad_norm(policy);
        check_step_health(step, batch_loss.item(), norm, cfg.grad_norm_abort);
        opt.step(policy);

        StepRecord rec;
        rec.step = step;
        rec.mean_loss = batch_loss.item();
        rec.mean_f_theta = sum_f / static_cast<double>(batch_size);
        rec.mean_dpo_margin = sum_dpo_margin / static_cast<double>(batch_size);
        rec.grad_norm = norm;
        log.steps.push_back(rec);

        const bool epoch_boundary = ((step + 1) % steps_per_epoch) == 0;
        const bool last_step = step + 1 == cfg.steps;
        if (epoch_boundary || last_step) {
            ++completed_epochs;
            auto evals = eval_margins(policy, eval_tok, eval_idx, completed_epochs);
            log.evals.insert(log.evals.end(), evals.begin(), evals.end());
            if (last_step) break;
        }
    }
    return log;
}

void write_step_log(const std::filesystem::path& path, const TrainLog& log) {
    csv::Writer w(path, {"step", "mean_loss", "mean_f_theta", "mean_dpo_margin", "grad_norm"});
    for (const auto& r : log.steps)
        w.row({csv::format(static_cast<std::int64_t>(r.step)), csv::format(r.mean_loss),
               csv::format(r.mean_f_theta), csv::format(r.mean_dpo_margin),
               csv::format(r.grad_norm)});
    w.close();
}

void write_eval_log(const std::filesystem::path& path, const TrainLog& log) {
    csv::Writer w(path, {"epoch", "pair_id", "k", "policy_margin"});
    for (const auto& r : log.evals)
        w.row({csv::format(static_cast<std::int64_t>(r.epoch)), r.pair_id, csv::format(r.k),
               csv::format(r.policy_margin)});
    w.close();
}

std::vector<EvalRecord> read_eval_log(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open file: " + path.string());
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("empty eval log: " + path.string());
    std::vector<EvalRecord> out;
    int line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string epoch_s, id_s, k_s, margin_s;
        if (!std::getline(ss, epoch_s, ',') || !std::getline(ss, id_s, ',') ||
            !std::getline(ss, k_s, ',') || !std::getline(ss, margin_s))
            throw std::runtime_error("eval log line " + std::to_string(line_no) +
                                     ": expected 4 columns");
        EvalRecord r;
        r.epoch = std::stoi(epoch_s);
        r.pair_id = id_s;
        r.k = std::stod(k_s);
        r.policy_margin = std::stod(margin_s);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace mipo::train
