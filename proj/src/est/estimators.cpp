#include "rws/est/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rws/error.hpp"

namespace rws::est {

using namespace rws::ad;

namespace {

Var as_matrix(Var v) {
  if (v.value().rank() == 2) return v;
  if (v.value().rank() == 1) return reshape(v, {1, v.size()});
  throw ShapeError("particle tensors must be [K] or [B, K]");
}

double row_logsumexp(const double* x, std::size_t n) {
  const double m = *std::max_element(x, x + n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += std::exp(x[i] - m);
  return m + std::log(z);
}

}  // namespace

ParticleSet make_particle_set(Var log_q, Var log_joint) {
  Var lq = as_matrix(log_q);
  Var lj = as_matrix(log_joint);
  if (lq.shape() != lj.shape()) throw ShapeError("log_q and log_joint shapes differ");
  if (lq.value().cols() < 1 || lq.value().rows() < 1) {
    throw std::invalid_argument("empty particle set");
  }
  return ParticleSet{lq, lj, sub(lj, lq)};
}

Var log_mean_weight(Var log_w) {
  const double k = static_cast<double>(log_w.value().cols());
  if (log_w.size() == 0) throw std::invalid_argument("empty particle set");
  return shift(logsumexp(log_w), -std::log(k));
}

Var iwae_elbo(const ParticleSet& ps) { return mean(log_mean_weight(ps.log_w)); }

Var wake_theta_surrogate(const ParticleSet& ps) {
  return mean(log_mean_weight(sub(ps.log_joint, detach(ps.log_q))));
}

Var reinforce_surrogate(const ParticleSet& ps) {
  Var log_z = log_mean_weight(ps.log_w);
  Var score = mul(detach(log_z), sum_last(ps.log_q));
  return mean(add(score, log_z));
}

Tensor vimco_baselines(const Tensor& log_w) {
  const std::size_t B = log_w.rows();
  const std::size_t K = log_w.cols();
  if (K < 2) throw std::invalid_argument("VIMCO needs K >= 2");
  Tensor out({B, K});
  std::vector<double> terms(K);
  const double log_k = std::log(static_cast<double>(K));
  for (std::size_t b = 0; b < B; ++b) {
    const double* lw = &log_w[b * K];
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) total += lw[k];
    for (std::size_t k = 0; k < K; ++k) {
      // Particle k's own weight replaced by the geometric mean of the others.
      std::copy(lw, lw + K, terms.begin());
      terms[k] = (total - lw[k]) / static_cast<double>(K - 1);
      out[b * K + k] = row_logsumexp(terms.data(), K) - log_k;
    }
  }
  return out;
}

Var vimco_surrogate(const ParticleSet& ps) {
  const Tensor& lw = ps.log_w.value();
  const std::size_t B = ps.batch(), K = ps.K();
  Tensor upsilon = vimco_baselines(lw);
  Var log_z = log_mean_weight(ps.log_w);
  Tensor coeff({B, K});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < K; ++k) coeff[b * K + k] = log_z.value()[b] - upsilon[b * K + k];
  Var score = sum_last(mul(ps.log_q.tape().constant(std::move(coeff)), ps.log_q));
  return mean(add(score, log_z));
}

Var relax_surrogate(const ParticleSet& ps, Var control, Var control_conditional) {
  if (control.size() != ps.batch() || control_conditional.size() != ps.batch()) {
    throw ShapeError("control variate must give one value per observation");
  }
  Var c = reshape(control, {ps.batch()});
  Var cc = reshape(control_conditional, {ps.batch()});
  Var log_z = log_mean_weight(ps.log_w);
  Var score = mul(detach(sub(log_z, cc)), sum_last(ps.log_q));
  return mean(add(add(score, sub(c, cc)), log_z));
}

Var sleep_phi_loss(Var log_q) {
  if (log_q.size() < 1) throw std::invalid_argument("sleep loss needs at least one sample");
  return neg(mean(log_q));
}

Tensor snis_weights(const Tensor& log_w) {
  const std::size_t K = log_w.cols();
  Tensor out(log_w.shape());
  for (std::size_t b = 0; b < log_w.rows(); ++b) {
    const double* lw = &log_w[b * K];
    const double lse = row_logsumexp(lw, K);
    if (!std::isfinite(lse)) throw NonFiniteError("all importance weights are zero");
    for (std::size_t k = 0; k < K; ++k) out[b * K + k] = std::exp(lw[k] - lse);
  }
  return out;
}

Var wake_phi_loss(const ParticleSet& ps, std::optional<Var> score_log_q) {
  Var lq = score_log_q ? as_matrix(*score_log_q) : ps.log_q;
  if (lq.shape() != ps.log_w.shape()) throw ShapeError("score log q shape mismatch");
  Var w = lq.tape().constant(snis_weights(ps.log_w.value()));
  return neg(mean(sum_last(mul(w, lq))));
}

Var defensive_mixture_log_probs(Var logits, double delta) {
  if (!(delta >= 0.0 && delta <= 1.0)) throw std::invalid_argument("delta must lie in [0, 1]");
  if (delta == 0.0) return log_softmax(logits);
  const double c = static_cast<double>(logits.value().cols());
  return log(shift(scale(softmax(logits), 1.0 - delta), delta / c));
}

double grad_std_metric(const std::function<std::vector<double>(Rng&)>& draw_gradient,
                       std::size_t repeats, Rng& rng) {
  if (repeats < 2) throw std::invalid_argument("grad-std metric needs at least 2 repeats");
  std::vector<std::vector<double>> draws;
  draws.reserve(repeats);
  for (std::size_t r = 0; r < repeats; ++r) draws.push_back(draw_gradient(rng));
  const std::size_t d = draws[0].size();
  if (d == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double m = 0.0;
    for (const auto& g : draws) m += g[i];
    m /= static_cast<double>(repeats);
    double ss = 0.0;
    for (const auto& g : draws) ss += (g[i] - m) * (g[i] - m);
    total += std::sqrt(ss / static_cast<double>(repeats - 1));
  }
  return total / static_cast<double>(d);
}

std::vector<double> flatten(const Params& params) {
  std::vector<double> out;
  for (const Tensor& p : params) out.insert(out.end(), p.values().begin(), p.values().end());
  return out;
}

}  // namespace rws::est
