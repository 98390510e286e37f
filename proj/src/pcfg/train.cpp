#include "rws/pcfg/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "rws/error.hpp"
#include "rws/est/estimators.hpp"

namespace rws::pcfg {

using namespace rws::ad;

namespace {

// Same stream layout as the mixture benchmark: the method is left out so
// methods share data and evaluation sets.
Rng stream(const PcfgConfig& cfg, std::uint64_t k, std::string_view purpose) {
  return make_stream(cfg.seed, "pcfg", k, purpose);
}

Params gradients_or_zero(const Gradients& g, std::span<const Var> leaves) {
  Params out;
  for (const Var& v : leaves) out.push_back(g.contains(v) ? g[v] : Tensor(v.value().shape(), 0.0));
  return out;
}

std::vector<Sentence> sample_sentences(const Grammar& g, const RuleProbs& probs, std::size_t n,
                                       std::size_t max_expansions, Rng& rng,
                                       std::vector<ParseTree>* trees = nullptr) {
  std::vector<Sentence> xs;
  for (std::size_t i = 0; i < n; ++i) {
    ParseTree t = sample_tree(g, probs, rng, max_expansions);
    xs.push_back(yield(g, t));
    if (trees) trees->push_back(std::move(t));
  }
  return xs;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void PcfgConfig::validate() const {
  if (method != Method::ws && method != Method::ww && method != Method::vimco &&
      method != Method::reinforce) {
    throw ConfigError("the parsing benchmark supports ws, ww, vimco and reinforce, not " +
                      std::string(method_name(method)));
  }
  if (K < 1) throw ConfigError("K must be at least 1");
  if (method == Method::vimco && K < 2) throw ConfigError("vimco needs K >= 2");
  if (batch < 1) throw ConfigError("batch must be at least 1");
  if (max_expansions < 1) throw ConfigError("max_expansions must be at least 1");
  if (cadence < 1) throw ConfigError("cadence must be at least 1");
  if (metric_samples < 1) throw ConfigError("metric_samples must be at least 1");
  if (!(wallclock_cap_s > 0.0)) throw ConfigError("wall-clock cap must be positive");
}

Params uniform_logits(const Grammar& g) {
  Params p;
  for (std::size_t n = 0; n < g.num_nonterminals(); ++n) p.emplace_back(Shape{g.num_rules(n)}, 0.0);
  return p;
}

RuleProbs rule_probs(const Params& logits) {
  RuleProbs out;
  for (const Tensor& l : logits) {
    const double m = *std::max_element(l.values().begin(), l.values().end());
    std::vector<double> p(l.size());
    double z = 0.0;
    for (std::size_t i = 0; i < l.size(); ++i) z += p[i] = std::exp(l[i] - m);
    for (double& v : p) v /= z;
    out.push_back(std::move(p));
  }
  return out;
}

Var trees_log_prior(std::span<const Var> theta, const Grammar& g, std::span<const ParseTree> trees) {
  if (theta.size() != g.num_nonterminals()) throw ShapeError("one logit vector per non-terminal");
  Tape& t = theta[0].tape();
  const std::size_t P = trees.size();
  Var total = t.constant(Tensor({P}, 0.0));
  for (std::size_t n = 0; n < g.num_nonterminals(); ++n) {
    const std::size_t R = g.num_rules(n);
    if (R == 1) continue;  // log 1
    Tensor counts({P, R}, 0.0);
    for (std::size_t p = 0; p < P; ++p)
      for (const auto& s : trees[p].steps)
        if (s.nonterminal == n) {
          if (s.rule >= R) throw GrammarError("rule index out of range");
          counts.at(p, s.rule) += 1.0;
        }
    Var lp = reshape(log_softmax(theta[n]), {R, 1});
    total = add(total, reshape(matmul(t.constant(std::move(counts)), lp), {P}));
  }
  return total;
}

double sleep_loss_proxy(const ParseInferenceNet& net, std::span<const ParseTree> trees,
                        std::span<const Sentence> xs, std::size_t max_expansions) {
  if (trees.empty()) throw std::invalid_argument("sleep-loss proxy needs samples");
  Tape t;
  auto phi = bind_params(t, net.params(), false);
  return est::sleep_phi_loss(net.score(phi, xs, trees, max_expansions)).item();
}

PcfgGradients estimate_pcfg_gradients(const PcfgConfig& cfg, const Grammar& g,
                                      const Params& theta_values, const ParseInferenceNet& net,
                                      std::span<const Sentence> xs, Rng& particles, Rng& sleep) {
  const std::size_t B = xs.size(), K = cfg.K;
  Tape t;
  auto theta = bind_params(t, theta_values, true);
  auto phi = bind_params(t, net.params(), true);
  auto prop = net.propose(phi, xs, K, particles, cfg.max_expansions);
  Tensor lik({B * K});
  for (std::size_t p = 0; p < B * K; ++p)
    lik[p] = relaxed_log_likelihood(xs[p / K], yield(g, prop.trees[p]));
  Var log_joint = add(trees_log_prior(theta, g, prop.trees), t.constant(std::move(lik)));
  auto ps = est::make_particle_set(reshape(prop.log_q, {B, K}), reshape(log_joint, {B, K}));

  Var loss;
  switch (cfg.method) {
    case Method::ws: {
      std::vector<ParseTree> dreams;
      auto dx = sample_sentences(g, rule_probs(theta_values), K * B, cfg.max_expansions, sleep,
                                 &dreams);
      loss = add(neg(est::wake_theta_surrogate(ps)),
                 est::sleep_phi_loss(net.score(phi, dx, dreams, cfg.max_expansions)));
      break;
    }
    case Method::ww:
      loss = add(neg(est::wake_theta_surrogate(ps)), est::wake_phi_loss(ps));
      break;
    case Method::vimco:
      loss = neg(est::vimco_surrogate(ps));
      break;
    case Method::reinforce:
      loss = neg(est::reinforce_surrogate(ps));
      break;
    default:
      throw ConfigError("unsupported method for the parsing benchmark");
  }
  PcfgGradients out;
  out.elbo = est::iwae_elbo(ps).item();
  Gradients grads = t.backward(loss);
  out.theta = gradients_or_zero(grads, theta);
  out.phi = gradients_or_zero(grads, phi);
  return out;
}

PcfgTrainer::PcfgTrainer(const PcfgConfig& c, Grammar g)
    : cfg((c.validate(), c)),
      grammar(std::move(g)),
      truth(true_probs(grammar)),
      theta(uniform_logits(grammar)),
      data_rng(stream(c, 0, "data")),
      particle_rng(stream(c, c.K, "particles")),
      sleep_rng(stream(c, c.K, "sleep")),
      theta_opt(theta, c.adam),
      phi_opt(Params{}, c.adam),
      started(std::chrono::steady_clock::now()) {
  Rng init = stream(c, 0, "init");
  net = ParseInferenceNet::make(grammar, init, c.net);
  phi_opt = optim::Adam(net.params(), c.adam);
  Rng eval = stream(c, 0, "eval");
  eval_x = sample_sentences(grammar, truth, c.metric_samples, c.max_expansions, eval, &eval_trees);
  if (c.corpus_size > 0) {
    Rng corpus_rng = stream(c, 0, "corpus");
    corpus = sample_sentences(grammar, truth, c.corpus_size, c.max_expansions, corpus_rng);
  }
}

double PcfgTrainer::elapsed_s() const {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
}

void PcfgTrainer::step() {
  std::vector<Sentence> xs;
  if (corpus.empty()) {
    xs = sample_sentences(grammar, truth, cfg.batch, cfg.max_expansions, data_rng);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
    for (std::size_t b = 0; b < cfg.batch; ++b) xs.push_back(corpus[pick(data_rng)]);
  }
  auto g = estimate_pcfg_gradients(cfg, grammar, theta, net, xs, particle_rng, sleep_rng);
  theta_opt.step(theta, g.theta);
  phi_opt.step(net.params(), g.phi);
  ++iteration;
}

PcfgRow PcfgTrainer::measure() const {
  PcfgRow row;
  row.iteration = iteration;
  row.production_kl = production_kl(rule_probs(theta), truth);
  row.sleep_loss_proxy = sleep_loss_proxy(net, eval_trees, eval_x, cfg.max_expansions);
  row.wallclock_s = elapsed_s();
  return row;
}

PcfgRun train_pcfg(const PcfgConfig& cfg, const Grammar& g,
                   const std::function<void(const PcfgRow&)>& on_row) {
  PcfgTrainer tr(cfg, g);
  PcfgRun run;
  for (;;) {
    const bool capped = tr.elapsed_s() >= cfg.wallclock_cap_s;
    const bool last = tr.iteration == cfg.iterations || capped;
    if (tr.iteration % cfg.cadence == 0 || last) {
      run.rows.push_back(tr.measure());
      if (on_row) on_row(run.rows.back());
    }
    if (last) {
      run.capped = capped && tr.iteration < cfg.iterations;
      break;
    }
    tr.step();
  }
  run.theta = std::move(tr.theta);
  run.net = std::move(tr.net);
  return run;
}

std::vector<PosteriorSample> posterior_samples(const ParseInferenceNet& net, const Grammar& g,
                                               const Params& theta, const Sentence& x,
                                               std::size_t n, std::size_t max_expansions,
                                               Rng& rng) {
  if (n < 1) throw std::invalid_argument("need at least one posterior sample");
  Tape t;
  auto phi = bind_params(t, net.params(), false);
  auto th = bind_params(t, theta, false);
  const std::vector<Sentence> xs{x};
  auto prop = net.propose(phi, xs, n, rng, max_expansions);
  const Tensor& lp = trees_log_prior(th, g, prop.trees).value();
  const Tensor& lq = prop.log_q.value();
  std::map<std::string, PosteriorSample> groups;
  for (std::size_t i = 0; i < n; ++i) {
    const Sentence s = yield(g, prop.trees[i]);
    const double lw = lp[i] + relaxed_log_likelihood(x, s) - lq[i];
    auto key = bracketed(g, prop.trees[i]);
    auto [it, fresh] = groups.try_emplace(key, PosteriorSample{key, g.sentence_text(s), 0, lw});
    it->second.count += 1;
    it->second.max_log_weight = std::max(it->second.max_log_weight, lw);
    (void)fresh;
  }
  std::vector<PosteriorSample> out;
  for (auto& [k, v] : groups) out.push_back(std::move(v));
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.count > b.count; });
  return out;
}

std::string format_posterior(std::span<const PosteriorSample> samples, std::size_t n) {
  std::string out;
  char buf[64];
  for (const auto& s : samples) {
    std::snprintf(buf, sizeof buf, "%.6f\t%zu\t%.6g\t", static_cast<double>(s.count) / n, s.count,
                  s.max_log_weight);
    out += buf + s.tree + "\n";
  }
  return out;
}

std::string pcfg_csv_header() {
  return "iteration,method,K,seed,production_kl,sleep_loss_proxy,wallclock_s";
}

std::string pcfg_csv_row(const PcfgConfig& cfg, const PcfgRow& row) {
  return std::to_string(row.iteration) + "," + std::string(method_name(cfg.method)) + "," +
         std::to_string(cfg.K) + "," + std::to_string(cfg.seed) + "," + fmt(row.production_kl) +
         "," + fmt(row.sleep_loss_proxy) + "," + fmt(row.wallclock_s);
}

}  // namespace rws::pcfg
