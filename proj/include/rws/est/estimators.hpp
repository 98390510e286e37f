#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "rws/ad/nn.hpp"
#include "rws/ad/ops.hpp"
#include "rws/rng.hpp"

// Objectives and surrogate losses for learning a generative model p_theta(z, x)
// together with an inference network q_phi(z | x).
//
// Every function returns a scalar whose gradient is the estimator named; the
// value itself is only meaningful where stated. Functions named *_surrogate
// are objectives to ascend, functions named *_loss are losses to descend.
// Quantities that must not carry gradient are detached explicitly.
namespace rws::est {

using ad::Params;
using ad::Tensor;
using ad::Var;

// K particles for each of B observations; every tensor is [B, K].
struct ParticleSet {
  Var log_q;      // log of the density the particles were drawn from
  Var log_joint;  // log p_theta(z_k, x)
  Var log_w;      // log_joint - log_q

  std::size_t batch() const { return log_w.value().rows(); }
  std::size_t K() const { return log_w.value().cols(); }
};

// Accepts [K] (one observation) or [B, K] tensors.
ParticleSet make_particle_set(Var log_q, Var log_joint);

// log((1/K) sum_k w_k) per observation, shape [B].
Var log_mean_weight(Var log_w);

// Mean over the batch of log((1/K) sum_k w_k).
Var iwae_elbo(const ParticleSet& ps);

// Same value as iwae_elbo with log q detached: the theta-gradient of
// log Z_hat, zero phi-gradient.
Var wake_theta_surrogate(const ParticleSet& ps);

// Score-function estimator of the IWAE gradient:
//   detach(log Z_hat) * sum_k log q(z_k | x) + log Z_hat.
Var reinforce_surrogate(const ParticleSet& ps);

// Leave-one-out baselines Upsilon_{-k}, computed in log space: for each row,
// log (1/K)(exp(mean_{l != k} log w_l) + sum_{l != k} w_l). Needs K >= 2.
Tensor vimco_baselines(const Tensor& log_w);

// REINFORCE with the score coefficient of particle k replaced by
// detach(log Z_hat - Upsilon_{-k}); the log Z_hat term is kept.
Var vimco_surrogate(const ParticleSet& ps);

// RELAX / REBAR form: detach(log Z_hat - c(g~)) * sum_k log q(z_k | x)
//   + c(g) - c(g~) + log Z_hat.
// `control` and `control_conditional` are [B] evaluations of the control
// variate on the Gumbels and on the conditional Gumbels.
Var relax_surrogate(const ParticleSet& ps, Var control, Var control_conditional);

// -mean log q(z | x) over pairs (z, x) drawn from the generative model.
// `log_q` holds one entry per sample.
Var sleep_phi_loss(Var log_q);

// Self-normalized importance weights softmax(log_w) per row, detached.
Tensor snis_weights(const Tensor& log_w);

// sum_k w_hat_k * (-log q(z_k | x)), averaged over the batch, with w_hat from
// ps.log_w. The score term uses `score_log_q` when given (the learned
// proposal when particles came from a defensive mixture), ps.log_q otherwise.
Var wake_phi_loss(const ParticleSet& ps, std::optional<Var> score_log_q = std::nullopt);

// Log PMF of (1 - delta) softmax(logits) + delta / C, row-wise. delta == 0
// returns log_softmax(logits) exactly.
Var defensive_mixture_log_probs(Var logits, double delta);

// Mean over coordinates of the per-coordinate sample standard deviation of
// `repeats` independent gradient draws.
double grad_std_metric(const std::function<std::vector<double>(Rng&)>& draw_gradient,
                       std::size_t repeats, Rng& rng);

// Flattens a parameter list into one coordinate vector.
std::vector<double> flatten(const Params& params);

}  // namespace rws::est
