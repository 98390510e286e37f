#include "rws/gmm/train.hpp"

#include <cstdio>
#include <stdexcept>

#include "rws/dist/distributions.hpp"
#include "rws/error.hpp"

namespace rws::gmm {

using namespace rws::ad;

namespace {

// Streams omit the method so that methods see common random numbers; data
// and the test set are also shared across K.
Rng stream(const GmmConfig& cfg, std::uint64_t k, std::string_view purpose) {
  return make_stream(cfg.seed, "gmm", k, purpose);
}

Params negated(Params p) {
  for (Tensor& t : p)
    for (double& v : t.values()) v = -v;
  return p;
}

Tensor as_tensor(std::span<const double> x) {
  return Tensor({x.size()}, std::vector<double>(x.begin(), x.end()));
}

StepGradients rws_gradients(const GmmConfig& cfg, const GmmState& s, std::span<const double> x,
                            Rng& particles, Rng& sleep) {
  const std::size_t B = x.size(), K = cfg.K;
  Tape t;
  Var theta = t.leaf(s.model.theta);
  auto phi = bind_params(t, s.net.params(), true);
  Var logits = s.net.logits(phi, x);
  const double delta = cfg.method == Method::delta_ww ? cfg.delta : 0.0;
  Var proposal = est::defensive_mixture_log_probs(logits, delta);
  const auto z = sample_particles(proposal.value(), K, particles);
  Var log_q = reshape(gather(repeat_rows(proposal, K), z), {B, K});
  auto ps = est::make_particle_set(log_q, log_joint(theta, s.model, x, z, K));

  Var loss = neg(est::wake_theta_surrogate(ps));
  if (cfg.method == Method::ws) {
    // K*B dreamed pairs match the particle budget of one wake update.
    JointSamples dream = sample_joint(s.model, K * B, sleep);
    Var lq = gather(log_softmax(s.net.logits(phi, dream.x)), dream.z);
    loss = add(loss, est::sleep_phi_loss(lq));
  } else {
    std::optional<Var> score;
    if (delta > 0.0) score = reshape(gather(repeat_rows(log_softmax(logits), K), z), {B, K});
    loss = add(loss, est::wake_phi_loss(ps, score));
  }
  StepGradients out;
  out.elbo = est::iwae_elbo(ps).item();
  Gradients g = t.backward(loss);
  out.theta = {g[theta]};
  out.phi = collect(g, phi);
  return out;
}

StepGradients iwae_gradients(const GmmConfig& cfg, const GmmState& s, std::span<const double> x,
                             Rng& particles) {
  const std::size_t B = x.size(), K = cfg.K;
  Tape t;
  Var theta = t.leaf(s.model.theta);
  auto phi = bind_params(t, s.net.params(), true);
  Var lp = log_softmax(s.net.logits(phi, x));
  const auto z = sample_particles(lp.value(), K, particles);
  Var log_q = reshape(gather(repeat_rows(lp, K), z), {B, K});
  auto ps = est::make_particle_set(log_q, log_joint(theta, s.model, x, z, K));
  Var surrogate = cfg.method == Method::vimco ? est::vimco_surrogate(ps) : est::reinforce_surrogate(ps);
  StepGradients out;
  out.elbo = est::iwae_elbo(ps).item();
  Gradients g = t.backward(neg(surrogate));
  out.theta = {g[theta]};
  out.phi = collect(g, phi);
  return out;
}

StepGradients concrete_gradients(const GmmConfig& cfg, const GmmState& s,
                                 std::span<const double> x, double temperature, Rng& particles) {
  const std::size_t B = x.size(), K = cfg.K;
  Tape t;
  Var theta = t.leaf(s.model.theta);
  auto phi = bind_params(t, s.net.params(), true);
  dist::Concrete q(repeat_rows(s.net.logits(phi, x), K), temperature);
  dist::ConcreteSample sample = q.rsample(particles);
  Var log_q = reshape(q.log_prob(sample.log_point), {B, K});
  Var log_p = reshape(soft_log_joint(theta, s.model, x, sample.point, K), {B, K});
  auto ps = est::make_particle_set(log_q, log_p);
  Var elbo = est::iwae_elbo(ps);
  StepGradients out;
  out.elbo = elbo.item();
  Gradients g = t.backward(neg(elbo));
  out.theta = {g[theta]};
  out.phi = collect(g, phi);
  return out;
}

est::RelaxProgram relax_program(const GmmConfig& cfg, const GmmState& s, std::span<const double> x,
                                Rng& particles) {
  const std::size_t B = x.size(), K = cfg.K, C = cfg.C;
  dist::GumbelNoise noise = dist::draw_gumbel_noise(B * K, C, particles);
  std::vector<std::size_t> choices;
  {
    Tape t;
    auto phi = bind_params(t, s.net.params(), false);
    choices = dist::gumbel_pack(s.net.logits(phi, x), K, noise).choices;
  }
  std::vector<double> xs(x.begin(), x.end());
  return [&s, K, B, noise = std::move(noise), choices = std::move(choices),
          xs = std::move(xs)](const est::RelaxBindings& b) {
    Var theta = b.theta[0];
    Var logits = s.net.logits(b.phi, xs);
    dist::GumbelPack pack = dist::gumbel_pack(logits, K, noise, std::span<const std::size_t>(choices));
    Var log_q = reshape(gather(repeat_rows(log_softmax(logits), K), choices), {B, K});
    auto ps = est::make_particle_set(log_q, log_joint(theta, s.model, xs, choices, K));
    auto soft = [&](Var pt) {
      Var q = softmax(repeat_rows(logits, K));
      return sub(soft_log_joint(theta, s.model, xs, pt, K), log(sum_last(mul(pt, q))));
    };
    est::ControlInputs in{pack.gumbels, K, as_tensor(xs), soft};
    Var c = s.control->evaluate(b.rho, in);
    in.gumbels = pack.conditional;
    Var cc = s.control->evaluate(b.rho, in);
    return est::RelaxTerms{ps, c, cc};
  };
}

StepGradients relax_step_gradients(const GmmConfig& cfg, const GmmState& s,
                                   std::span<const double> x, Rng& particles, bool with_rho) {
  est::RelaxProgram program = relax_program(cfg, s, x, particles);
  const Params& rho = s.control->params();
  StepGradients out;
  if (with_rho) {
    est::RelaxGradients g = est::relax_gradients(program, {s.model.theta}, s.net.params(), rho);
    out.theta = negated(std::move(g.theta));
    out.phi = negated(std::move(g.phi));
    out.rho = std::move(g.rho);
    out.elbo = g.elbo;
    return out;
  }
  Tape t;
  std::vector<Var> theta{t.leaf(s.model.theta)};
  auto phi = bind_params(t, s.net.params(), true);
  auto bound_rho = bind_params(t, rho, false);
  est::RelaxTerms terms = program(est::RelaxBindings{&t, theta, phi, bound_rho});
  out.elbo = est::iwae_elbo(terms.particles).item();
  Gradients g = t.backward(
      neg(est::relax_surrogate(terms.particles, terms.control, terms.control_conditional)));
  out.theta = {g[theta[0]]};
  out.phi = collect(g, phi);
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void GmmConfig::validate() const {
  if (K < 1) throw ConfigError("K must be at least 1");
  if (method == Method::vimco && K < 2) throw ConfigError("vimco needs K >= 2");
  if (C < 2) throw ConfigError("C must be at least 2");
  if (batch < 1) throw ConfigError("batch size must be at least 1");
  if (cadence < 1) throw ConfigError("cadence must be at least 1");
  if (test_points < 1) throw ConfigError("test set must be non-empty");
  if (grad_std_repeats < 2) throw ConfigError("grad-std needs at least 2 repeats");
  if (!(delta >= 0.0 && delta <= 1.0)) throw ConfigError("delta must lie in [0, 1]");
  if (!(temperature_start > 0.0 && temperature_end > 0.0)) {
    throw ConfigError("temperatures must be positive");
  }
  if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be positive");
}

GmmState initial_state(const GmmConfig& cfg) {
  Rng init = stream(cfg, 0, "init");
  GmmState s{GmmModel::make(init_theta(cfg.C, cfg.init)), InferenceNet::make(cfg.C, init), {}};
  if (cfg.method == Method::relax) {
    Rng cv_init = stream(cfg, 0, "cv-init");
    s.control = cfg.control == est::ControlKind::rebar ? est::ControlVariate::rebar()
                                                       : est::ControlVariate::relax_mlp(cfg.C, cv_init);
  }
  return s;
}

StepGradients estimate_gradients(const GmmConfig& cfg, const GmmState& state,
                                 std::span<const double> x, double temperature, Rng& particles,
                                 Rng& sleep, bool with_rho) {
  switch (cfg.method) {
    case Method::ws:
    case Method::ww:
    case Method::delta_ww:
      return rws_gradients(cfg, state, x, particles, sleep);
    case Method::reinforce:
    case Method::vimco:
      return iwae_gradients(cfg, state, x, particles);
    case Method::relax:
      return relax_step_gradients(cfg, state, x, particles, with_rho);
    case Method::concrete:
      return concrete_gradients(cfg, state, x, temperature, particles);
  }
  throw std::logic_error("unhandled method");
}

double temperature_at(const GmmConfig& cfg, std::size_t iteration) {
  if (cfg.iterations == 0) return cfg.temperature_start;
  const double f = static_cast<double>(std::min(iteration, cfg.iterations)) /
                   static_cast<double>(cfg.iterations);
  return cfg.temperature_start + f * (cfg.temperature_end - cfg.temperature_start);
}

double grad_std(const GmmConfig& cfg, const GmmState& state, std::span<const double> x,
                double temperature, std::size_t repeats, Rng& rng) {
  auto draw = [&](Rng& r) {
    return est::flatten(estimate_gradients(cfg, state, x, temperature, r, r, false).phi);
  };
  return est::grad_std_metric(draw, repeats, rng);
}

MetricRow measure(const GmmConfig& cfg, const GmmState& state, const GmmModel& truth,
                  std::span<const double> test_x, std::size_t iteration, Rng& rng) {
  MetricRow row;
  row.iteration = iteration;
  const auto prior = state.model.prior();
  row.l2_prior = l2_distance(prior, truth.prior());
  row.l2_posterior = l2_posterior(state.net, truth, test_x);
  row.support_size = branch_support(prior).size();
  const auto x = sample_batch(truth, cfg.batch, rng);
  row.grad_std = grad_std(cfg, state, x, temperature_at(cfg, iteration), cfg.grad_std_repeats, rng);
  return row;
}

GmmTrainer::GmmTrainer(const GmmConfig& c)
    : cfg((c.validate(), c)),
      truth(GmmModel::make(true_theta(c.C))),
      state(initial_state(c)),
      data_rng(stream(c, 0, "data")),
      particle_rng(stream(c, c.K, "particles")),
      sleep_rng(stream(c, c.K, "sleep")),
      metric_rng(stream(c, c.K, "metrics")),
      theta_opt(Params{state.model.theta}, c.adam),
      phi_opt(state.net.params(), c.adam) {
  Rng test = stream(c, 0, "test");
  test_x = sample_batch(truth, c.test_points, test);
  if (state.control) rho_opt.emplace(state.control->params(), c.adam);
}

void GmmTrainer::step() {
  const auto x = sample_batch(truth, cfg.batch, data_rng);
  StepGradients g = estimate_gradients(cfg, state, x, temperature_at(cfg, iteration), particle_rng,
                                       sleep_rng, true);
  Params theta{state.model.theta};
  theta_opt.step(theta, g.theta);
  state.model.theta = std::move(theta[0]);
  phi_opt.step(state.net.params(), g.phi);
  if (rho_opt) rho_opt->step(state.control->params(), g.rho);
  ++iteration;
}

GmmRun train_gmm(const GmmConfig& cfg, const std::function<void(const MetricRow&)>& on_row) {
  GmmTrainer tr(cfg);
  GmmRun run;
  for (;;) {
    if (tr.iteration % cfg.cadence == 0 || tr.iteration == cfg.iterations) {
      run.rows.push_back(measure(cfg, tr.state, tr.truth, tr.test_x, tr.iteration, tr.metric_rng));
      if (on_row) on_row(run.rows.back());
    }
    if (tr.iteration == cfg.iterations) break;
    tr.step();
  }
  run.final_state = std::move(tr.state);
  return run;
}

std::string gmm_csv_header() {
  return "iteration,method,K,seed,l2_prior,l2_posterior,grad_std,support_size";
}

std::string gmm_csv_row(const GmmConfig& cfg, const MetricRow& row) {
  return std::to_string(row.iteration) + "," + method_name(cfg.method) + "," +
         std::to_string(cfg.K) + "," + std::to_string(cfg.seed) + "," + fmt(row.l2_prior) + "," +
         fmt(row.l2_posterior) + "," + fmt(row.grad_std) + "," + std::to_string(row.support_size);
}

}  // namespace rws::gmm
