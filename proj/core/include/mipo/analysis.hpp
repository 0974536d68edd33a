#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mipo/objectives.hpp"
#include "mipo/trainer.hpp"

namespace mipo::analysis {

// Per-bucket change of the policy margin, bucketed on reference-model K
// percentiles over the eval set (bottom/top 20%, ties broken by pair id).
struct BucketReport {
    std::string bucket;  // bottom20 | middle60 | top20
    int n = 0;
    double mean_k = 0.0;
    double mean_margin_before = 0.0;
    double mean_margin_after = 0.0;
    double delta = 0.0;
};

std::vector<BucketReport> analyze_k(const std::map<std::string, double>& margin_before,
                                    const std::map<std::string, double>& margin_after,
                                    const std::map<std::string, double>& ref_k);

void write_bucket_csv(const std::filesystem::path& path,
                      const std::vector<BucketReport>& reports);

struct LossCurvePoint {
    double f = 0.0;
    double k = 0.0;
    const char* variant = "";
    double loss = 0.0;
};

// Tabulates the modulated loss over an f grid for each K, for the exact
// modulator plus the q(K)=K and q=0 reference lines.
std::vector<LossCurvePoint> losscurve(double beta, const std::vector<double>& k_values,
                                      double f_min, double f_max, int n_points);

void write_losscurve_csv(const std::filesystem::path& path,
                         const std::vector<LossCurvePoint>& points);

struct SweepRow {
    double beta = 0.0;
    double final_mean_train_loss = 0.0;
    double mean_eval_policy_margin = 0.0;
    bool diverged = false;
};

struct SweepResult {
    SweepRow row;
    lm::TinyLm policy;
    train::TrainLog log;
};

// One alignment run per requested beta, each starting from a fresh copy of
// `policy_init` with the shared seed. A diverging run sets the flag on its
// row instead of aborting the sweep. Duplicate betas are dropped with a
// warning on stderr.
std::vector<SweepResult> sweep_beta(const lm::TinyLm& policy_init,
                                    const std::vector<data::PreferencePair>& train_pairs,
                                    const std::vector<train::PairStatsEntry>& train_stats,
                                    const std::vector<data::PreferencePair>& eval_pairs,
                                    const std::vector<train::PairStatsEntry>& eval_stats,
                                    const train::AlignConfig& base,
                                    const std::vector<double>& betas);

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

}  // namespace mipo::analysis
