#include "mipo/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mipo::obj {

namespace {

void require_beta(double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("beta must be > 0");
}

}  // namespace

double softplus(double x) {
    // exponent magnitude clamped at 700: the 64-bit overflow boundary
    return std::max(x, 0.0) + std::log1p(std::exp(-std::min(std::abs(x), 700.0)));
}

double log_sigmoid(double x) { return -softplus(-x); }

double sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double compute_k(const lm::SequenceLogLik& ref_w, const lm::SequenceLogLik& ref_l) {
    return ref_w.avg_logp - ref_l.avg_logp;
}

PairStats make_pair_stats(const lm::SequenceLogLik& ref_w, const lm::SequenceLogLik& ref_l) {
    return PairStats{ref_w, ref_l, compute_k(ref_w, ref_l)};
}

double q_of_k(double k) {
    if (!std::isfinite(k)) throw std::invalid_argument("q_of_k: k must be finite");
    return softplus(k);
}

LossBreakdown mipo_loss(double f_theta, double k, double beta) {
    require_beta(beta);
    LossBreakdown b;
    b.f_theta = f_theta;
    b.q_k = q_of_k(k);
    b.beta = beta;
    // same evaluation order as the tensor path: -beta * f + beta * q
    const double neg_z = -beta * f_theta + beta * b.q_k;
    b.loss = softplus(neg_z);
    b.dloss_df = -beta * sigmoid(neg_z);
    return b;
}

diff::Tensor mipo_loss(diff::Graph& g, const diff::Tensor& f_theta, double k, double beta) {
    require_beta(beta);
    const double q = q_of_k(k);
    // softplus(-beta * (f - q)) = softplus(-beta * f + beta * q)
    return g.softplus(g.affine(f_theta, -beta, beta * q));
}

double loss_grad_wrt_margin(const LossBreakdown& b) {
    return -b.beta * sigmoid(-b.beta * b.f_theta + b.beta * b.q_k);
}

double dpo_loss(const DpoMargins& m, double beta) {
    require_beta(beta);
    return softplus(-beta * (m.dw - m.dl));
}

diff::Tensor dpo_loss(diff::Graph& g, const diff::Tensor& policy_sum_w,
                      const diff::Tensor& policy_sum_l, double ref_sum_w, double ref_sum_l,
                      double beta) {
    require_beta(beta);
    // beta * ((sw - rw) - (sl - rl)) with the reference sums folded into the shift
    diff::Tensor margin = g.add(policy_sum_w, g.affine(policy_sum_l, -1.0, 0.0));
    return g.softplus(g.affine(margin, -beta, beta * (ref_sum_w - ref_sum_l)));
}

double simpo_loss(double f_theta, double beta, double gamma) {
    require_beta(beta);
    if (gamma < 0.0) throw std::invalid_argument("gamma must be >= 0");
    return softplus(-(beta * f_theta - gamma));
}

diff::Tensor simpo_loss(diff::Graph& g, const diff::Tensor& f_theta, double beta, double gamma) {
    require_beta(beta);
    if (gamma < 0.0) throw std::invalid_argument("gamma must be >= 0");
    return g.softplus(g.affine(f_theta, -beta, gamma));
}

double modulated_loss(double f_theta, double k, double beta, ModulatorVariant variant) {
    require_beta(beta);
    double q = 0.0;
    switch (variant) {
        case ModulatorVariant::Softplus: q = q_of_k(k); break;
        case ModulatorVariant::IdentityK: q = k; break;
        case ModulatorVariant::Zero: q = 0.0; break;
    }
    return softplus(-beta * f_theta + beta * q);
}

const char* variant_name(ModulatorVariant variant) {
    switch (variant) {
        case ModulatorVariant::Softplus: return "mipo";
        case ModulatorVariant::IdentityK: return "ref_k";
        case ModulatorVariant::Zero: return "ref_zero";
    }
    return "unknown";
}

}  // namespace mipo::obj
