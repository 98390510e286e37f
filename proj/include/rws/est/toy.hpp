#pragma once

#include <cstddef>
#include <vector>

#include "rws/ad/nn.hpp"
#include "rws/est/estimators.hpp"
#include "rws/est/relax.hpp"
#include "rws/rng.hpp"

// A fully discrete model small enough to enumerate: z in {0, 1, 2},
// x in {0, 1, 2, 3}, p(z) = softmax(theta), p(x | z) a fixed table, and
// q(z | x) = softmax(phi[x]). The data objective is the unweighted mean over
// the four x values.
namespace rws::toy {

using ad::Params;
using ad::Tensor;
using ad::Var;

inline constexpr std::size_t kLatents = 3;
inline constexpr std::size_t kObservations = 4;

enum class Estimator { reinforce, vimco };

struct ToyModel {
  Tensor theta;       // [C]
  Tensor likelihood;  // [C, X], rows sum to 1
  Tensor phi;         // [X, C]

  static ToyModel random(Rng& rng);

  std::vector<double> prior() const;
  std::vector<double> q(std::size_t x) const;
  double log_marginal(std::size_t x) const;
  std::vector<double> posterior(std::size_t x) const;
  // Joint probabilities p(z, x), row-major [C, X].
  std::vector<double> joint() const;
};

// Particles for the observations `xs`, K per observation, latents row-major.
est::ParticleSet particles(Var theta, Var phi, const ToyModel& m, std::span<const std::size_t> xs,
                           std::span<const std::size_t> z, std::size_t K);

// Mean over x of E_Q[log (1/K) sum_k w_k], summing over all z-tuples.
Var exact_elbo(Var theta, Var phi, const ToyModel& m, std::size_t K);

// Gradient of exact_elbo in phi.
Tensor exact_phi_gradient(const ToyModel& m, std::size_t K);

// The phi-gradient of the estimator averaged exactly over all z-tuples.
Tensor expected_phi_gradient(const ToyModel& m, std::size_t K, Estimator e);

// Exact E_{p(z,x)}[-log q(z|x)], with p(x) the model marginal.
Var exact_sleep_loss(Var phi, const ToyModel& m);
// E over (z, x) of the phi-gradient of sleep_phi_loss on one sample.
Tensor expected_sleep_gradient(const ToyModel& m);
// Closed form: p(x) (q(.|x) - p(.|x)) for row x.
Tensor closed_form_sleep_gradient(const ToyModel& m);

// Soft evaluations used by the REBAR control: for relaxed s in row r*K + k,
// log s.(pi * lik[:, x_r]) - log s.q(.|x_r).
est::SoftLogRatio soft_log_ratio(Var theta, Var phi, const ToyModel& m, std::size_t K);

// A RELAX program over all four observations with frozen noise; choices are
// the argmax of the Gumbels at the model's phi.
est::RelaxProgram relax_program(const ToyModel& m, const est::ControlVariate& cv, std::size_t K,
                                Rng& rng);

// One RELAX phi-gradient draw at the model's parameters.
Tensor relax_phi_gradient(const ToyModel& m, const est::ControlVariate& cv, std::size_t K,
                          Rng& rng);

}  // namespace rws::toy
