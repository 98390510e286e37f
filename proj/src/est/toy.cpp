#include "rws/est/toy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rws/dist/distributions.hpp"

namespace rws::toy {

using namespace rws::ad;

namespace {

constexpr std::size_t C = kLatents;
constexpr std::size_t X = kObservations;

std::vector<double> softmax_of(std::span<const double> l) {
  const double m = *std::max_element(l.begin(), l.end());
  std::vector<double> p(l.size());
  double z = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) z += p[i] = std::exp(l[i] - m);
  for (double& v : p) v /= z;
  return p;
}

// Calls f(z) for every K-tuple over {0..C-1}, z row-major.
template <class F>
void for_each_tuple(std::size_t K, F&& f) {
  std::vector<std::size_t> z(K, 0);
  for (;;) {
    f(std::span<const std::size_t>(z));
    std::size_t i = 0;
    while (i < K && ++z[i] == C) z[i++] = 0;
    if (i == K) return;
  }
}

double tuple_prob(const std::vector<double>& q, std::span<const std::size_t> z) {
  double p = 1.0;
  for (std::size_t k : z) p *= q[k];
  return p;
}

const std::vector<std::size_t>& all_observations() {
  static const std::vector<std::size_t> xs{0, 1, 2, 3};
  return xs;
}

}  // namespace

ToyModel ToyModel::random(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ToyModel m{Tensor({C}), Tensor({C, X}), Tensor({X, C})};
  for (double& v : m.theta.values()) v = n(rng);
  for (double& v : m.phi.values()) v = n(rng);
  for (std::size_t c = 0; c < C; ++c) {
    std::vector<double> l(X);
    for (double& v : l) v = 1.5 * n(rng);
    auto p = softmax_of(l);
    std::copy(p.begin(), p.end(), &m.likelihood[c * X]);
  }
  return m;
}

std::vector<double> ToyModel::prior() const { return softmax_of(theta.values()); }

std::vector<double> ToyModel::q(std::size_t x) const {
  return softmax_of(phi.values().subspan(x * C, C));
}

std::vector<double> ToyModel::joint() const {
  const auto pz = prior();
  std::vector<double> j(C * X);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t x = 0; x < X; ++x) j[c * X + x] = pz[c] * likelihood[c * X + x];
  return j;
}

double ToyModel::log_marginal(std::size_t x) const {
  const auto j = joint();
  double p = 0.0;
  for (std::size_t c = 0; c < C; ++c) p += j[c * X + x];
  return std::log(p);
}

std::vector<double> ToyModel::posterior(std::size_t x) const {
  const auto j = joint();
  std::vector<double> p(C);
  double z = 0.0;
  for (std::size_t c = 0; c < C; ++c) z += p[c] = j[c * X + x];
  for (double& v : p) v /= z;
  return p;
}

est::ParticleSet particles(Var theta, Var phi, const ToyModel& m, std::span<const std::size_t> xs,
                           std::span<const std::size_t> z, std::size_t K) {
  const std::size_t R = xs.size();
  Tape& t = phi.tape();
  Var log_q = gather(log_softmax(repeat_rows(index_rows(phi, xs), K)), z);
  Var log_prior = index_rows(reshape(log_softmax(theta), {C, 1}), z);
  Tensor log_lik({R * K});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t k = 0; k < K; ++k)
      log_lik[r * K + k] = std::log(m.likelihood[z[r * K + k] * X + xs[r]]);
  Var log_joint = add(reshape(log_prior, {R * K}), t.constant(std::move(log_lik)));
  return est::make_particle_set(reshape(log_q, {R, K}), reshape(log_joint, {R, K}));
}

Var exact_elbo(Var theta, Var phi, const ToyModel& m, std::size_t K) {
  Tape& t = phi.tape();
  Var total = t.scalar(0.0);
  for (std::size_t x = 0; x < X; ++x) {
    const std::size_t xs[] = {x};
    for_each_tuple(K, [&](std::span<const std::size_t> z) {
      est::ParticleSet ps = particles(theta, phi, m, xs, z, K);
      Var weight = exp(sum(ps.log_q));
      total = add(total, mul(weight, sum(est::log_mean_weight(ps.log_w))));
    });
  }
  return scale(total, 1.0 / X);
}

Tensor exact_phi_gradient(const ToyModel& m, std::size_t K) {
  Tape t;
  Var theta = t.constant(m.theta);
  Var phi = t.leaf(m.phi);
  return t.backward(exact_elbo(theta, phi, m, K))[phi];
}

Tensor expected_phi_gradient(const ToyModel& m, std::size_t K, Estimator e) {
  Tensor out(m.phi.shape(), 0.0);
  for (std::size_t x = 0; x < X; ++x) {
    const auto qx = m.q(x);
    const std::size_t xs[] = {x};
    for_each_tuple(K, [&](std::span<const std::size_t> z) {
      Tape t;
      Var theta = t.constant(m.theta);
      Var phi = t.leaf(m.phi);
      est::ParticleSet ps = particles(theta, phi, m, xs, z, K);
      Var s = e == Estimator::vimco ? est::vimco_surrogate(ps) : est::reinforce_surrogate(ps);
      const Tensor& g = t.backward(s)[phi];
      const double w = tuple_prob(qx, z) / X;
      for (std::size_t i = 0; i < g.size(); ++i) out[i] += w * g[i];
    });
  }
  return out;
}

Var exact_sleep_loss(Var phi, const ToyModel& m) {
  Tape& t = phi.tape();
  const auto j = m.joint();
  Tensor weights({X, C});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t x = 0; x < X; ++x) weights[x * C + c] = j[c * X + x];
  return neg(sum(mul(t.constant(std::move(weights)), log_softmax(phi))));
}

Tensor expected_sleep_gradient(const ToyModel& m) {
  const auto j = m.joint();
  Tensor out(m.phi.shape(), 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t x = 0; x < X; ++x) {
      Tape t;
      Var phi = t.leaf(m.phi);
      const std::size_t xs[] = {x}, zs[] = {c};
      Var log_q = gather(log_softmax(index_rows(phi, xs)), zs);
      const Tensor& g = t.backward(est::sleep_phi_loss(log_q))[phi];
      for (std::size_t i = 0; i < g.size(); ++i) out[i] += j[c * X + x] * g[i];
    }
  }
  return out;
}

Tensor closed_form_sleep_gradient(const ToyModel& m) {
  Tensor out(m.phi.shape());
  for (std::size_t x = 0; x < X; ++x) {
    const double px = std::exp(m.log_marginal(x));
    const auto qx = m.q(x), post = m.posterior(x);
    for (std::size_t c = 0; c < C; ++c) out[x * C + c] = px * (qx[c] - post[c]);
  }
  return out;
}

est::SoftLogRatio soft_log_ratio(Var theta, Var phi, const ToyModel& m, std::size_t K) {
  return [theta, phi, &m, K](Var s) {
    Tape& t = s.tape();
    const std::size_t rows = X * K;
    Tensor lik({rows, C});
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < C; ++c) lik[r * C + c] = m.likelihood[c * X + r / K];
    Var prior = repeat_rows(reshape(softmax(theta), {1, C}), rows);
    Var joint = mul(prior, t.constant(std::move(lik)));
    Var q = softmax(repeat_rows(phi, K));
    return sub(log(sum_last(mul(s, joint))), log(sum_last(mul(s, q))));
  };
}

est::RelaxProgram relax_program(const ToyModel& m, const est::ControlVariate& cv, std::size_t K,
                                Rng& rng) {
  dist::GumbelNoise noise = dist::draw_gumbel_noise(X * K, C, rng);
  std::vector<std::size_t> choices;
  {
    Tape t;
    choices = dist::gumbel_pack(t.constant(m.phi), K, noise).choices;
  }
  return [&m, cv, K, noise = std::move(noise), choices = std::move(choices)](
             const est::RelaxBindings& b) {
    Var theta = b.theta[0], phi = b.phi[0];
    dist::GumbelPack pack = dist::gumbel_pack(phi, K, noise, std::span<const std::size_t>(choices));
    est::ParticleSet ps = particles(theta, phi, m, all_observations(), choices, K);
    est::ControlInputs in{pack.gumbels, K, Tensor::vector({0.0, 1.0, 2.0, 3.0}),
                          soft_log_ratio(theta, phi, m, K)};
    Var c = cv.evaluate(b.rho, in);
    in.gumbels = pack.conditional;
    Var cc = cv.evaluate(b.rho, in);
    return est::RelaxTerms{ps, c, cc};
  };
}

Tensor relax_phi_gradient(const ToyModel& m, const est::ControlVariate& cv, std::size_t K,
                          Rng& rng) {
  est::RelaxProgram program = relax_program(m, cv, K, rng);
  Tape t;
  std::vector<Var> theta{t.constant(m.theta)}, phi{t.leaf(m.phi)};
  std::vector<Var> rho = bind_params(t, cv.params(), false);
  est::RelaxTerms terms = program(est::RelaxBindings{&t, theta, phi, rho});
  return t.backward(est::relax_surrogate(terms.particles, terms.control,
                                         terms.control_conditional))[phi[0]];
}

}  // namespace rws::toy
