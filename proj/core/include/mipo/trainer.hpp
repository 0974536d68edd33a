#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mipo/corpus.hpp"
#include "mipo/model.hpp"
#include "mipo/objectives.hpp"

namespace mipo::train {

enum class Method { Mipo, Dpo, Simpo };

Method parse_method(std::string_view name);
const char* method_name(Method m);

struct SftConfig {
    int steps = 1200;
    int batch_size = 16;
    double learning_rate = 3e-4;
    int warmup_steps = 10;
    std::uint64_t seed = 1;
    double grad_norm_abort = 1e3;
};

struct AlignConfig {
    Method method = Method::Mipo;
    double beta = 10.0;
    double learning_rate = 1e-4;
    int steps = 1;
    int batch_size = 16;
    std::uint64_t seed = 1;
    std::optional<double> gamma;  // SimPO only
    int warmup_steps = 10;
    double grad_norm_abort = 1e3;

    void validate() const;
};

struct StepRecord {
    int step = 0;
    double mean_loss = 0.0;
    double mean_f_theta = 0.0;
    double mean_dpo_margin = 0.0;
    double grad_norm = 0.0;
};

struct EvalRecord {
    int epoch = 0;
    std::string pair_id;
    double k = 0.0;
    double policy_margin = 0.0;  // f(theta) for the pair
};

struct TrainLog {
    std::vector<StepRecord> steps;
    std::vector<EvalRecord> evals;
};

struct TrainingDiverged : std::runtime_error {
    int step;
    TrainingDiverged(int step_, const std::string& what_)
        : std::runtime_error(what_), step(step_) {}
};

// Adam with fixed (0.9, 0.999, 1e-8) moments and linear learning-rate warmup.
// Parameters are visited in name order; updates are deterministic.
class Adam {
public:
    Adam(double learning_rate, int warmup_steps);
    void step(lm::TinyLm& model);
    int steps_taken() const { return t_; }

private:
    double lr_;
    int warmup_;
    int t_ = 0;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> state_;
};

struct TokenizedPair {
    std::string id;
    std::vector<int> prompt;
    std::vector<int> chosen;
    std::vector<int> rejected;
};

std::vector<TokenizedPair> tokenize_pairs(const lm::Vocab& vocab,
                                          const std::vector<data::PreferencePair>& pairs);

// Supervised fine-tuning on (prompt, chosen); returns the per-step losses.
std::vector<double> train_sft(lm::TinyLm& model, const std::vector<data::PreferencePair>& corpus,
                              const SftConfig& cfg);

struct PairStatsEntry {
    std::string id;
    obj::PairStats stats;
};

// Reference-model quantities for every pair, evaluated with gradients
// disabled (no backward pass ever runs on the reference graphs).
std::vector<PairStatsEntry> precompute_pair_stats(const lm::TinyLm& reference,
                                                  const std::vector<data::PreferencePair>& pairs);

// JSONL sidecar cache keyed by (checkpoint hash, pair id).
void save_pair_stats(const std::filesystem::path& path, const std::string& checkpoint_hash,
                     const std::vector<PairStatsEntry>& entries);

// Returns cached entries when the stored hash matches and ids cover `pairs`;
// otherwise recomputes, rewrites the cache, and warns on stderr. cache_hit
// reports which branch was taken.
std::vector<PairStatsEntry> pair_stats_with_cache(const lm::TinyLm& reference,
                                                  const std::string& checkpoint_hash,
                                                  const std::vector<data::PreferencePair>& pairs,
                                                  const std::filesystem::path& cache_path,
                                                  bool* cache_hit = nullptr);

// Preference-optimization training with the selected objective. The policy is
// trained in place; reference quantities enter only through `stats` as frozen
// constants. Emits one StepRecord per step and one EvalRecord per eval pair at
// initialization (epoch 0) and after each completed epoch.
TrainLog train_align(lm::TinyLm& policy, const std::vector<data::PreferencePair>& train_pairs,
                     const std::vector<PairStatsEntry>& train_stats,
                     const std::vector<data::PreferencePair>& eval_pairs,
                     const std::vector<PairStatsEntry>& eval_stats, const AlignConfig& cfg);

void write_step_log(const std::filesystem::path& path, const TrainLog& log);
void write_eval_log(const std::filesystem::path& path, const TrainLog& log);
std::vector<EvalRecord> read_eval_log(const std::filesystem::path& path);

}  // namespace mipo::train
