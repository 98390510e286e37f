#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "rws/ad/nn.hpp"
#include "rws/est/estimators.hpp"
#include "rws/rng.hpp"

// Gaussian mixture with learnable mixture logits theta and fixed components
// N(10c, 5^2), c = 0..C-1.
namespace rws::gmm {

using ad::Params;
using ad::Tensor;
using ad::Var;

enum class InitMode { adverse, uniform };
InitMode parse_init_mode(std::string_view name);
std::string_view init_mode_name(InitMode m);

struct GmmModel {
  Tensor theta;             // [C]
  std::vector<double> mu;   // 10c
  std::vector<double> var;  // 25

  static GmmModel make(Tensor theta);
  std::size_t C() const { return mu.size(); }
  std::vector<double> prior() const;
};

// Logits with softmax(theta)_c = (c + 5) / sum_i (i + 5).
Tensor true_theta(std::size_t C);
// adverse: theta_c = -c; uniform: zeros.
Tensor init_theta(std::size_t C, InitMode mode);

// z ~ Cat(softmax(theta)), x ~ N(mu_z, var_z).
std::vector<double> sample_batch(const GmmModel& m, std::size_t B, Rng& rng);

struct JointSamples {
  std::vector<std::size_t> z;
  std::vector<double> x;
};
JointSamples sample_joint(const GmmModel& m, std::size_t n, Rng& rng);

std::vector<double> exact_posterior(const GmmModel& m, double x);

double l2_distance(std::span<const double> a, std::span<const double> b);

// Indices with mass above `threshold`.
std::vector<std::size_t> branch_support(std::span<const double> pmf, double threshold = 1e-3);

// q(z | x): an MLP 1-16-C with tanh hidden units applied to raw x.
struct InferenceNet {
  ad::Mlp mlp;

  static InferenceNet make(std::size_t C, Rng& rng);
  Params& params() { return mlp.params; }
  const Params& params() const { return mlp.params; }
  // Logits [B, C] for x [B].
  Var logits(std::span<const Var> phi, std::span<const double> x) const;
  // Posterior PMFs for x, row-major [B, C].
  std::vector<double> posteriors(std::span<const double> x) const;
};

// (1/M) sum_m ||q(. | x_m) - p_true(. | x_m)||.
double l2_posterior(const InferenceNet& net, const GmmModel& truth, std::span<const double> test_x);

// log p_theta(z, x) for K particles per observation, z row-major [B*K];
// returns [B, K].
Var log_joint(Var theta, const GmmModel& m, std::span<const double> x,
              std::span<const std::size_t> z, std::size_t K);

// log p_theta(s, x) for relaxed points s [B*K, C] under soft component
// selection: log(s.softmax(theta)) + log N(x | s.mu, s.var). Returns [B*K].
Var soft_log_joint(Var theta, const GmmModel& m, std::span<const double> x, Var s, std::size_t K);

// K draws per row of a [B, C] table of log probabilities, row-major [B*K].
std::vector<std::size_t> sample_particles(const Tensor& log_probs, std::size_t K, Rng& rng);

// SNIS wake-phi gradient and the exact gradient of
// (1/B) sum_b E_{p_theta(z|x_b)}[-log q(z|x_b)] at the net's parameters.
Params snis_phi_gradient(const InferenceNet& net, const GmmModel& m, std::span<const double> x,
                         std::size_t K, Rng& rng);
Params exact_wake_phi_gradient(const InferenceNet& net, const GmmModel& m,
                               std::span<const double> x);

}  // namespace rws::gmm
