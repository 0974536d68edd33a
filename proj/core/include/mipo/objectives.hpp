#pragma once

#include "mipo/model.hpp"
#include "mipo/tensor.hpp"

namespace mipo::obj {

// Overflow-safe scalar kernels (natural log throughout).
double softplus(double x);     // max(x,0) + log1p(exp(-|x|)), argument clamped at +-700
double log_sigmoid(double x);  // -softplus(-x)
double sigmoid(double x);

// Reference-model quantities for one preference pair. k is the reference
// model's average-log-likelihood margin between chosen and rejected.
struct PairStats {
    lm::SequenceLogLik ref_w;
    lm::SequenceLogLik ref_l;
    double k = 0.0;
};

double compute_k(const lm::SequenceLogLik& ref_w, const lm::SequenceLogLik& ref_l);

PairStats make_pair_stats(const lm::SequenceLogLik& ref_w, const lm::SequenceLogLik& ref_l);

// Intervention modulator q(K) = ln(1 + e^K): strictly increasing, convex,
// q(K) > max(K, 0); converges to K for large K and to 0 for very negative K.
double q_of_k(double k);

// Per-pair loss evaluation with the margin gradient in closed form.
struct LossBreakdown {
    double f_theta = 0.0;   // policy average-log-likelihood margin (nats)
    double q_k = 0.0;       // modulator value
    double loss = 0.0;      // softplus(-beta * (f_theta - q_k))
    double dloss_df = 0.0;  // -beta * sigmoid(-beta * (f_theta - q_k))
    double beta = 0.0;
};

LossBreakdown mipo_loss(double f_theta, double k, double beta);

// Differentiable form: gradient flows only through f_theta; k is frozen.
diff::Tensor mipo_loss(diff::Graph& g, const diff::Tensor& f_theta, double k, double beta);

double loss_grad_wrt_margin(const LossBreakdown& breakdown);

// Policy-vs-reference log-ratio margins from summed (not averaged)
// log-likelihoods.
struct DpoMargins {
    double dw = 0.0;  // log pi_theta(y_w|x) - log pi_ref(y_w|x)
    double dl = 0.0;  // log pi_theta(y_l|x) - log pi_ref(y_l|x)
};

double dpo_loss(const DpoMargins& margins, double beta);

// Differentiable form over policy summed log-likelihoods; reference sums are
// frozen constants.
diff::Tensor dpo_loss(diff::Graph& g, const diff::Tensor& policy_sum_w,
                      const diff::Tensor& policy_sum_l, double ref_sum_w, double ref_sum_l,
                      double beta);

// Optional length-normalized baseline: -log sigmoid(beta * f_theta - gamma).
double simpo_loss(double f_theta, double beta, double gamma);
diff::Tensor simpo_loss(diff::Graph& g, const diff::Tensor& f_theta, double beta, double gamma);

// Modulator substitutions used by the loss-curve analysis: the exact q,
// the q(K) = K reference line, and the q = 0 line.
enum class ModulatorVariant { Softplus, IdentityK, Zero };

double modulated_loss(double f_theta, double k, double beta, ModulatorVariant variant);

const char* variant_name(ModulatorVariant variant);

}  // namespace mipo::obj
