#include "rws/est/relax.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rws/error.hpp"

namespace rws::est {

using namespace rws::ad;

namespace {

constexpr std::size_t kHidden = 16;
constexpr double kMinTemperature = 1e-4;

struct Bound {
  Tape tape;
  std::vector<Var> theta, phi, rho;
};

RelaxTerms run(const RelaxProgram& program, Bound& b) {
  return program(RelaxBindings{&b.tape, b.theta, b.phi, b.rho});
}

Params axpy(const Params& p, double a, const std::vector<double>& v) {
  Params out = p;
  std::size_t i = 0;
  for (Tensor& t : out)
    for (double& x : t.values()) x += a * v[i++];
  return out;
}

}  // namespace

ControlVariate ControlVariate::rebar(double rho1, double log_temperature) {
  ControlVariate cv;
  cv.kind_ = ControlKind::rebar;
  cv.params_ = {Tensor::scalar(rho1), Tensor::scalar(log_temperature)};
  return cv;
}

ControlVariate ControlVariate::relax_mlp(std::size_t categories, Rng& rng) {
  if (categories < 1) throw std::invalid_argument("control variate needs C >= 1");
  ControlVariate cv;
  cv.kind_ = ControlKind::relax_mlp;
  cv.mlp_ = Mlp::make({1 + categories, kHidden, kHidden, 1}, rng);
  cv.params_ = std::move(cv.mlp_.params);
  cv.mlp_.params.clear();
  return cv;
}

Var ControlVariate::evaluate(std::span<const Var> rho, const ControlInputs& in) const {
  if (rho.size() != params_.size()) throw ShapeError("control variate: wrong number of params");
  const Tensor& g = in.gumbels.value();
  if (g.rank() != 2 || in.K == 0 || g.rows() % in.K != 0) {
    throw ShapeError("control variate: gumbels must be [R*K, C]");
  }
  const std::size_t R = g.rows() / in.K;

  if (kind_ == ControlKind::rebar) {
    if (!in.soft_log_ratio) throw std::invalid_argument("REBAR control needs soft evaluations");
    if (std::exp(rho[1].item()) < kMinTemperature) {
      throw std::domain_error("REBAR temperature below 1e-4 saturates the softmax");
    }
    Var s = softmax(mul(in.gumbels, exp(neg(rho[1]))));
    Var ratio = in.soft_log_ratio(s);
    if (ratio.size() != g.rows()) throw ShapeError("soft log ratio: one value per row expected");
    return mul(rho[0], log_mean_weight(reshape(ratio, {R, in.K})));
  }

  if (in.x.size() != R) throw ShapeError("control variate: one x per observation expected");
  if (g.cols() + 1 != mlp_.sizes.front()) throw ShapeError("control variate: wrong category count");
  Tape& t = in.gumbels.tape();
  Var x = repeat_rows(t.constant(in.x.reshaped({R, 1})), in.K);
  std::vector<Var> parts{x, in.gumbels};
  Var out = mlp_.forward(rho, concat_last(parts));
  return mean_last(reshape(out, {R, in.K}));
}

double relax_variance_proxy(const RelaxProgram& program, const Params& theta, const Params& phi,
                            const Params& rho) {
  Bound b;
  b.theta = bind_params(b.tape, theta, false);
  b.phi = bind_params(b.tape, phi, true);
  b.rho = bind_params(b.tape, rho, false);
  RelaxTerms terms = run(program, b);
  Gradients grads = b.tape.backward(relax_surrogate(terms.particles, terms.control,
                                                    terms.control_conditional));
  const std::vector<double> g = flatten(collect(grads, b.phi));
  double ss = 0.0;
  for (double x : g) ss += x * x;
  return g.empty() ? 0.0 : ss / static_cast<double>(g.size());
}

RelaxGradients relax_gradients(const RelaxProgram& program, const Params& theta,
                               const Params& phi, const Params& rho, double step) {
  if (rho.empty()) throw std::invalid_argument("relax step: control variate has no parameters");
  RelaxGradients out;

  std::vector<double> v;
  {
    Bound b;
    b.theta = bind_params(b.tape, theta, true);
    b.phi = bind_params(b.tape, phi, true);
    b.rho = bind_params(b.tape, rho, false);
    RelaxTerms terms = run(program, b);
    Var s = relax_surrogate(terms.particles, terms.control, terms.control_conditional);
    out.surrogate = s.item();
    out.elbo = iwae_elbo(terms.particles).item();
    Gradients grads = b.tape.backward(s);
    out.theta = collect(grads, b.theta);
    out.phi = collect(grads, b.phi);
    v = flatten(out.phi);
  }
  const double d = static_cast<double>(v.size());
  double ss = 0.0, vmax = 0.0;
  for (double x : v) {
    ss += x * x;
    vmax = std::max(vmax, std::abs(x));
  }
  out.proxy = v.empty() ? 0.0 : ss / d;

  out.rho.clear();
  for (const Tensor& r : rho) out.rho.emplace_back(r.shape(), 0.0);
  if (vmax == 0.0) return out;

  // Only the terms of g.v that depend on rho are rebuilt:
  //   mean_b[-c(g~)_b * DlogQ_b[v]] + D mean_b[c(g) - c(g~)][v].
  const double eps = step / vmax;
  const Params phi_plus = axpy(phi, eps, v);
  const Params phi_minus = axpy(phi, -eps, v);

  Bound b;
  b.theta = bind_params(b.tape, theta, false);
  b.rho = bind_params(b.tape, rho, true);
  b.phi = bind_params(b.tape, phi, false);
  RelaxTerms base = run(program, b);
  b.phi = bind_params(b.tape, phi_plus, false);
  RelaxTerms plus = run(program, b);
  b.phi = bind_params(b.tape, phi_minus, false);
  RelaxTerms minus = run(program, b);

  const std::size_t B = base.particles.batch();
  auto row_sums = [&](const RelaxTerms& t) {
    const Tensor& lq = t.particles.log_q.value();
    std::vector<double> s(B, 0.0);
    for (std::size_t r = 0; r < B; ++r)
      for (std::size_t k = 0; k < t.particles.K(); ++k) s[r] += lq[r * t.particles.K() + k];
    return s;
  };
  const std::vector<double> qp = row_sums(plus), qm = row_sums(minus);
  Tensor dlogq({B});
  for (std::size_t r = 0; r < B; ++r) dlogq[r] = (qp[r] - qm[r]) / (2.0 * eps);

  Var score = neg(mean(mul(reshape(base.control_conditional, {B}), b.tape.constant(dlogq))));
  Var diff_plus = mean(sub(plus.control, plus.control_conditional));
  Var diff_minus = mean(sub(minus.control, minus.control_conditional));
  Var directional = add(score, scale(sub(diff_plus, diff_minus), 1.0 / (2.0 * eps)));

  Gradients grads = b.tape.backward(directional);
  out.rho = collect(grads, b.rho);
  for (Tensor& t : out.rho)
    for (double& x : t.values()) x *= 2.0 / d;
  return out;
}

}  // namespace rws::est
