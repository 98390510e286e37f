#include "rws/gmm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "rws/dist/distributions.hpp"
#include "rws/error.hpp"

namespace rws::gmm {

using namespace rws::ad;

namespace {

std::vector<double> softmax_of(std::span<const double> l) {
  const double m = *std::max_element(l.begin(), l.end());
  std::vector<double> p(l.size());
  double z = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) z += p[i] = std::exp(l[i] - m);
  for (double& v : p) v /= z;
  return p;
}

Tensor column(std::span<const double> x) {
  return Tensor({x.size(), 1}, std::vector<double>(x.begin(), x.end()));
}

}  // namespace

InitMode parse_init_mode(std::string_view name) {
  if (name == "adverse") return InitMode::adverse;
  if (name == "uniform") return InitMode::uniform;
  throw ConfigError("unknown init mode '" + std::string(name) + "'");
}

std::string_view init_mode_name(InitMode m) {
  return m == InitMode::adverse ? "adverse" : "uniform";
}

GmmModel GmmModel::make(Tensor theta) {
  const std::size_t C = theta.size();
  if (C < 2) throw std::invalid_argument("a mixture needs C >= 2");
  GmmModel m{theta.reshaped({C}), std::vector<double>(C), std::vector<double>(C, 25.0)};
  for (std::size_t c = 0; c < C; ++c) m.mu[c] = 10.0 * static_cast<double>(c);
  return m;
}

std::vector<double> GmmModel::prior() const { return softmax_of(theta.values()); }

Tensor true_theta(std::size_t C) {
  Tensor t({C});
  for (std::size_t c = 0; c < C; ++c) t[c] = std::log(static_cast<double>(c) + 5.0);
  return t;
}

Tensor init_theta(std::size_t C, InitMode mode) {
  Tensor t({C}, 0.0);
  if (mode == InitMode::adverse)
    for (std::size_t c = 0; c < C; ++c) t[c] = -static_cast<double>(c);
  return t;
}

JointSamples sample_joint(const GmmModel& m, std::size_t n, Rng& rng) {
  JointSamples s{std::vector<std::size_t>(n), std::vector<double>(n)};
  std::normal_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    s.z[i] = dist::sample_categorical(m.theta.values(), rng);
    s.x[i] = m.mu[s.z[i]] + std::sqrt(m.var[s.z[i]]) * unit(rng);
  }
  return s;
}

std::vector<double> sample_batch(const GmmModel& m, std::size_t B, Rng& rng) {
  if (B < 1) throw std::invalid_argument("batch size must be at least 1");
  return sample_joint(m, B, rng).x;
}

std::vector<double> exact_posterior(const GmmModel& m, double x) {
  const std::size_t C = m.C();
  const auto pz = m.prior();
  std::vector<double> l(C);
  for (std::size_t c = 0; c < C; ++c) {
    l[c] = std::log(pz[c]) + dist::normal_log_pdf(x, m.mu[c], std::sqrt(m.var[c]));
  }
  return softmax_of(l);
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("l2 distance of PMFs with different sizes");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::vector<std::size_t> branch_support(std::span<const double> pmf, double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pmf.size(); ++i)
    if (pmf[i] > threshold) out.push_back(i);
  return out;
}

InferenceNet InferenceNet::make(std::size_t C, Rng& rng) {
  return InferenceNet{Mlp::make({1, 16, C}, rng)};
}

Var InferenceNet::logits(std::span<const Var> phi, std::span<const double> x) const {
  if (phi.empty()) throw ShapeError("inference net needs bound parameters");
  return mlp.forward(phi, phi[0].tape().constant(column(x)));
}

std::vector<double> InferenceNet::posteriors(std::span<const double> x) const {
  Tape t;
  auto phi = bind_params(t, params(), false);
  Var p = softmax(logits(phi, x));
  return {p.value().values().begin(), p.value().values().end()};
}

double l2_posterior(const InferenceNet& net, const GmmModel& truth, std::span<const double> test_x) {
  if (test_x.empty()) throw std::invalid_argument("empty test set");
  const std::size_t C = truth.C();
  const auto q = net.posteriors(test_x);
  double total = 0.0;
  for (std::size_t i = 0; i < test_x.size(); ++i) {
    const auto p = exact_posterior(truth, test_x[i]);
    total += l2_distance(std::span(q).subspan(i * C, C), p);
  }
  return total / static_cast<double>(test_x.size());
}

Var log_joint(Var theta, const GmmModel& m, std::span<const double> x,
              std::span<const std::size_t> z, std::size_t K) {
  const std::size_t B = x.size();
  if (z.size() != B * K) throw ShapeError("log joint: need K latents per observation");
  Tape& t = theta.tape();
  Var log_prior = index_rows(reshape(log_softmax(theta), {m.C(), 1}), z);
  Tensor log_lik({B * K});
  for (std::size_t i = 0; i < B * K; ++i) {
    log_lik[i] = dist::normal_log_pdf(x[i / K], m.mu[z[i]], std::sqrt(m.var[z[i]]));
  }
  return reshape(add(reshape(log_prior, {B * K}), t.constant(std::move(log_lik))), {B, K});
}

Var soft_log_joint(Var theta, const GmmModel& m, std::span<const double> x, Var s, std::size_t K) {
  Tape& t = s.tape();
  const std::size_t rows = s.value().rows();
  const std::size_t C = m.C();
  if (rows != x.size() * K || s.value().cols() != C) throw ShapeError("soft joint: bad point shape");
  Var prior = log(sum_last(mul(s, repeat_rows(reshape(softmax(theta), {1, C}), rows))));
  Tensor mu({rows, C}), var({rows, C}), xs({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    xs[r] = x[r / K];
    for (std::size_t c = 0; c < C; ++c) {
      mu[r * C + c] = m.mu[c];
      var[r * C + c] = m.var[c];
    }
  }
  Var mean = sum_last(mul(s, t.constant(std::move(mu))));
  Var v = sum_last(mul(s, t.constant(std::move(var))));
  Var diff = sub(t.constant(std::move(xs)), mean);
  Var lik = sub(scale(div(square(diff), v), -0.5), scale(log(v), 0.5));
  return add(prior, shift(lik, -0.5 * std::log(2.0 * std::numbers::pi)));
}

std::vector<std::size_t> sample_particles(const Tensor& log_probs, std::size_t K, Rng& rng) {
  const std::size_t C = log_probs.cols();
  std::vector<std::size_t> z;
  z.reserve(log_probs.rows() * K);
  for (std::size_t b = 0; b < log_probs.rows(); ++b) {
    auto row = log_probs.values().subspan(b * C, C);
    for (std::size_t k = 0; k < K; ++k) z.push_back(dist::sample_categorical(row, rng));
  }
  return z;
}

Params snis_phi_gradient(const InferenceNet& net, const GmmModel& m, std::span<const double> x,
                         std::size_t K, Rng& rng) {
  Tape t;
  auto phi = bind_params(t, net.params(), true);
  Var theta = t.constant(m.theta);
  Var lp = log_softmax(net.logits(phi, x));
  const auto z = sample_particles(lp.value(), K, rng);
  Var log_q = reshape(gather(repeat_rows(lp, K), z), {x.size(), K});
  auto ps = est::make_particle_set(log_q, log_joint(theta, m, x, z, K));
  return collect(t.backward(est::wake_phi_loss(ps)), phi);
}

Params exact_wake_phi_gradient(const InferenceNet& net, const GmmModel& m,
                               std::span<const double> x) {
  Tape t;
  auto phi = bind_params(t, net.params(), true);
  const std::size_t C = m.C();
  Tensor post({x.size(), C});
  for (std::size_t b = 0; b < x.size(); ++b) {
    const auto p = exact_posterior(m, x[b]);
    std::copy(p.begin(), p.end(), &post[b * C]);
  }
  Var lp = log_softmax(net.logits(phi, x));
  Var loss = neg(mean(sum_last(mul(t.constant(std::move(post)), lp))));
  return collect(t.backward(loss), phi);
}

}  // namespace rws::gmm
