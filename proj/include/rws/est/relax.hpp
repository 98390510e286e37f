#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "rws/ad/nn.hpp"
#include "rws/est/estimators.hpp"
#include "rws/rng.hpp"

// Control variates for the RELAX estimator and the step that trains them.
namespace rws::est {

enum class ControlKind { rebar, relax_mlp };

// log soft-joint - log soft-q for relaxed points s, one value per row of s.
using SoftLogRatio = std::function<Var(Var s)>;

struct ControlInputs {
  Var gumbels;            // [R*K, C], row r*K + k belongs to observation r
  std::size_t K = 1;
  Tensor x;               // [R], fed to the MLP variant
  SoftLogRatio soft_log_ratio;  // needed by the REBAR variant only
};

class ControlVariate {
 public:
  // rho1 * log((1/K) sum_k soft-joint_k / soft-q_k) with soft points
  // softmax(g_k / exp(rho2)).
  static ControlVariate rebar(double rho1 = 1.0, double log_temperature = 0.0);
  // (1/K) sum_k MLP([x, g_k]), architecture (1+C)-16-16-1, tanh.
  static ControlVariate relax_mlp(std::size_t categories, Rng& rng);

  ControlKind kind() const { return kind_; }
  const ad::Params& params() const { return params_; }
  ad::Params& params() { return params_; }

  // One control value per observation, shape [R]. `rho` are the bound params.
  Var evaluate(std::span<const Var> rho, const ControlInputs& in) const;

 private:
  ControlKind kind_ = ControlKind::rebar;
  ad::Mlp mlp_;
  ad::Params params_;
};

struct RelaxTerms {
  ParticleSet particles;
  Var control;              // c(g), [B]
  Var control_conditional;  // c(g~), [B]
};

struct RelaxBindings {
  ad::Tape* tape;
  std::span<const Var> theta;
  std::span<const Var> phi;
  std::span<const Var> rho;
};

// Rebuilds the RELAX terms at the bound parameters with all randomness and
// the discrete choices frozen.
using RelaxProgram = std::function<RelaxTerms(const RelaxBindings&)>;

struct RelaxGradients {
  ad::Params theta;
  ad::Params phi;
  ad::Params rho;        // gradient of `proxy` in rho
  double proxy = 0.0;    // mean of squared phi-gradient coordinates
  double surrogate = 0.0;
  double elbo = 0.0;
};

// Gradients of relax_surrogate in theta and phi, and the rho-gradient of the
// single-sample variance proxy (1/D) sum_d g_d^2.
//
// The tape has no second derivatives, so the rho-gradient is formed as
// (2/D) J_rho(g)^T g, with the phi-directional derivatives along g taken by
// a central difference of step `step` (in max-norm) over the frozen program.
RelaxGradients relax_gradients(const RelaxProgram& program, const ad::Params& theta,
                               const ad::Params& phi, const ad::Params& rho,
                               double step = 1e-5);

// The proxy alone, for checking relax_gradients against finite differences.
double relax_variance_proxy(const RelaxProgram& program, const ad::Params& theta,
                            const ad::Params& phi, const ad::Params& rho);

}  // namespace rws::est
