#include "mipo/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "mipo/csv.hpp"

namespace mipo::analysis {

namespace {

void require_same_ids(const std::map<std::string, double>& a,
                      const std::map<std::string, double>& b, const char* a_name,
                      const char* b_name) {
    std::vector<std::string> missing;
    for (const auto& [id, v] : a)
        if (!b.count(id)) missing.push_back(id);
    for (const auto& [id, v] : b)
        if (!a.count(id)) missing.push_back(id);
    if (!missing.empty()) {
        std::ostringstream os;
        os << "pair id mismatch between " << a_name << " and " << b_name << "; unmatched:";
        for (const auto& id : missing) os << " " << id;
        throw std::invalid_argument(os.str());
    }
}

}  // namespace

std::vector<BucketReport> analyze_k(const std::map<std::string, double>& margin_before,
                                    const std::map<std::string, double>& margin_after,
                                    const std::map<std::string, double>& ref_k) {
    require_same_ids(margin_before, margin_after, "before", "after");
    require_same_ids(margin_before, ref_k, "before", "reference");
    const auto n = static_cast<int>(ref_k.size());
    if (n < 5) throw std::invalid_argument("analyze_k: need at least 5 pairs");

    std::vector<std::pair<double, std::string>> order;  // (k, id), ties broken by id
    order.reserve(ref_k.size());
    for (const auto& [id, k] : ref_k) order.emplace_back(k, id);
    std::sort(order.begin(), order.end());

    const int nb = n / 5;  // floor(0.2 n)
    auto make_report = [&](const char* name, int lo, int hi) {  // [lo, hi)
        BucketReport r;
        r.bucket = name;
        r.n = hi - lo;
        for (int i = lo; i < hi; ++i) {
            const auto& id = order[static_cast<std::size_t>(i)].second;
            r.mean_k += order[static_cast<std::size_t>(i)].first;
            r.mean_margin_before += margin_before.at(id);
            r.mean_margin_after += margin_after.at(id);
        }
        r.mean_k /= r.n;
        r.mean_margin_before /= r.n;
        r.mean_margin_after /= r.n;
        r.delta = r.mean_margin_after - r.mean_margin_before;
        return r;
    };

    return {make_report("bottom20", 0, nb), make_report("middle60", nb, n - nb),
            make_report("top20", n - nb, n)};
}

void write_bucket_csv(const std::filesystem::path& path,
                      const std::vector<BucketReport>& reports) {
    csv::Writer w(path, {"bucket", "n", "mean_k", "mean_margin_before", "mean_margin_after",
                         "delta"});
    for (const auto& r : reports)
        w.row({r.bucket, csv::format(static_cast<std::int64_t>(r.n)), csv::format(r.mean_k),
               csv::format(r.mean_margin_before), csv::format(r.mean_margin_after),
               csv::format(r.delta)});
    w.close();
}

std::vector<LossCurvePoint> losscurve(double beta, const std::vector<double>& k_values,
                                      double f_min, double f_max, int n_points) {
    if (k_values.empty() || n_points < 2 || !(f_min < f_max))
        throw std::invalid_argument("losscurve: empty grid");
    for (double k : k_values)
        if (!std::isfinite(k)) throw std::invalid_argument("losscurve: non-finite K");
    constexpr obj::ModulatorVariant kVariants[] = {obj::ModulatorVariant::Softplus,
                                                   obj::ModulatorVariant::IdentityK,
                                                   obj::ModulatorVariant::Zero};
    std::vector<LossCurvePoint> out;
    out.reserve(k_values.size() * 3 * static_cast<std::size_t>(n_points));
    const double step = (f_max - f_min) / static_cast<double>(n_points - 1);
    for (double k : k_values)
        for (auto variant : kVariants)
            for (int i = 0; i < n_points; ++i) {
                LossCurvePoint p;
                p.f = f_min + step * i;
                p.k = k;
                p.variant = obj::variant_name(variant);
                p.loss = obj::modulated_loss(p.f, k, beta, variant);
                out.push_back(p);
            }
    return out;
}

void write_losscurve_csv(const std::filesystem::path& path,
                         const std::vector<LossCurvePoint>& points) {
    csv::Writer w(path, {"f", "k", "variant", "loss"});
    for (const auto& p : points)
        w.row({csv::format(p.f), csv::format(p.k), p.variant, csv::format(p.loss)});
    w.close();
}

std::vector<SweepResult> sweep_beta(const lm::TinyLm& policy_init,
                                    const std::vector<data::PreferencePair>& train_pairs,
                                    const std::vector<train::PairStatsEntry>& train_stats,
                                    const std::vector<data::PreferencePair>& eval_pairs,
                                    const std::vector<train::PairStatsEntry>& eval_stats,
                                    const train::AlignConfig& base,
                                    const std::vector<double>& betas) {
    if (betas.empty()) throw std::invalid_argument("sweep_beta: no betas requested");
    std::vector<double> unique;
    for (double b : betas) {
        if (!(b > 0.0)) throw std::invalid_argument("beta must be > 0");
        if (std::find(unique.begin(), unique.end(), b) != unique.end()) {
            std::cerr << "warning: duplicate beta " << b << " dropped from sweep\n";
            continue;
        }
        unique.push_back(b);
    }

    std::vector<SweepResult> results;
    results.reserve(unique.size());
    for (double b : unique) {
        train::AlignConfig cfg = base;
        cfg.beta = b;
        lm::TinyLm policy = policy_init.clone();
        SweepRow row;
        row.beta = b;
        train::TrainLog log;
        try {
            log = train_align(policy, train_pairs, train_stats, eval_pairs, eval_stats, cfg);
            row.diverged = false;
            row.final_mean_train_loss = log.steps.empty() ? 0.0 : log.steps.back().mean_loss;
            double sum = 0.0;
            int count = 0;
            const int last_epoch = log.evals.empty() ? 0 : log.evals.back().epoch;
            for (const auto& e : log.evals)
                if (e.epoch == last_epoch) {
                    sum += e.policy_margin;
                    ++count;
                }
            row.mean_eval_policy_margin = count ? sum / count : 0.0;
        } catch (const train::TrainingDiverged& e) {
            std::cerr << "warning: beta " << b << " diverged: " << e.what() << "\n";
            row.diverged = true;
            row.final_mean_train_loss = std::numeric_limits<double>::quiet_NaN();
            row.mean_eval_policy_margin = std::numeric_limits<double>::quiet_NaN();
        }
        results.push_back(SweepResult{row, std::move(policy), std::move(log)});
    }
    return results;
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
    csv::Writer w(path, {"beta", "final_mean_train_loss", "mean_eval_policy_margin",
                         "diverged"});
    for (const auto& r : rows)
        w.row({csv::format(r.beta), csv::format(r.final_mean_train_loss),
               csv::format(r.mean_eval_policy_margin), r.diverged ? "true" : "false"});
    w.close();
}

}  // namespace mipo::analysis
