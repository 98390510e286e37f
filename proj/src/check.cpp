#include "rws/check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "rws/ad/gradcheck.hpp"
#include "rws/ad/nn.hpp"
#include "rws/est/estimators.hpp"
#include "rws/est/toy.hpp"
#include "rws/pcfg/net.hpp"
#include "rws/pcfg/train.hpp"

namespace rws {

using namespace rws::ad;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

CheckResult make(std::string name, double error, double tol) {
  return {std::move(name), error, tol, error <= tol};
}

// All derivations of at most `budget` expansions.
void derivations(const pcfg::Grammar& g, std::vector<std::size_t> stack, pcfg::ParseTree prefix,
                 std::size_t budget, std::vector<pcfg::ParseTree>& out) {
  if (stack.empty()) {
    out.push_back(prefix);
    return;
  }
  if (prefix.steps.size() >= budget) return;
  const std::size_t n = stack.back();
  stack.pop_back();
  for (std::size_t r = 0; r < g.num_rules(n); ++r) {
    auto s = stack;
    const auto& rhs = g.productions(n)[r].rhs;
    for (auto it = rhs.rbegin(); it != rhs.rend(); ++it)
      if (!it->terminal) s.push_back(it->id);
    auto p = prefix;
    p.steps.push_back({n, r, false});
    derivations(g, s, p, budget, out);
  }
}

}  // namespace

std::vector<CheckResult> run_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  Rng rng = make_stream(seed, "check", 0, "models");

  double reinforce = 0.0, vimco = 0.0, sleep = 0.0, fd_phi = 0.0, fd_theta = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    auto m = toy::ToyModel::random(rng);
    const Tensor exact = toy::exact_phi_gradient(m, 2);
    reinforce = std::max(reinforce, max_abs_diff(
        toy::expected_phi_gradient(m, 2, toy::Estimator::reinforce), exact));
    vimco = std::max(vimco, max_abs_diff(toy::expected_phi_gradient(m, 2, toy::Estimator::vimco), exact));
    Tape t;
    Var phi = t.leaf(m.phi);
    const Tensor sleep_exact = t.backward(toy::exact_sleep_loss(phi, m))[phi];
    sleep = std::max(sleep, max_abs_diff(toy::expected_sleep_gradient(m), sleep_exact));
    fd_phi = std::max(fd_phi, finite_difference_check(
        [&](Tape& tp, Var p) { return toy::exact_elbo(tp.constant(m.theta), p, m, 2); }, m.phi)
        .max_rel_error);
    fd_theta = std::max(fd_theta, finite_difference_check(
        [&](Tape& tp, Var th) { return toy::exact_elbo(th, tp.constant(m.phi), m, 3); }, m.theta)
        .max_rel_error);
  }
  out.push_back(make("reinforce phi-gradient expectation = exact ELBO gradient", reinforce, 1e-8));
  out.push_back(make("vimco phi-gradient expectation = exact ELBO gradient", vimco, 1e-8));
  out.push_back(make("sleep phi-gradient expectation = exact sleep-loss gradient", sleep, 1e-8));
  out.push_back(make("finite differences: exact ELBO in phi", fd_phi, 1e-4));
  out.push_back(make("finite differences: exact ELBO in theta", fd_theta, 1e-4));

  {
    auto mlp = Mlp::make({3, 5, 2}, rng);
    Tensor x({4, 3});
    std::normal_distribution<double> n01;
    for (double& v : x.values()) v = n01(rng);
    double worst = 0.0;
    for (std::size_t i = 0; i < mlp.params.size(); ++i) {
      auto f = [&](Tape& tp, Var p) {
        std::vector<Var> bound = bind_params(tp, mlp.params, false);
        bound[i] = p;
        return mean(logsumexp(mlp.forward(bound, tp.constant(x))));
      };
      worst = std::max(worst, finite_difference_check(f, mlp.params[i]).max_rel_error);
    }
    out.push_back(make("finite differences: MLP log-sum-exp loss", worst, 1e-4));
  }

  {
    std::normal_distribution<double> wide(0.0, 300.0);
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      Tensor lw({5, 7});
      for (double& v : lw.values()) v = wide(rng);
      const Tensor w = est::snis_weights(lw);
      for (std::size_t r = 0; r < 5; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 7; ++c) s += w.at(r, c);
        worst = std::max(worst, std::abs(s - 1.0));
      }
    }
    out.push_back(make("SNIS weights sum to one", worst, 1e-12));
  }

  {
    auto g = pcfg::Grammar::load(std::string(RWS_ASSET_DIR) + "/astronomers.pcfg");
    const auto probs = pcfg::true_probs(g);
    std::vector<pcfg::ParseTree> trees;
    derivations(g, {g.start()}, {}, 9, trees);
    double worst = 0.0;
    for (const auto& t : trees) {
      double product = 1.0;
      for (const auto& s : t.steps) product *= g.productions(s.nonterminal)[s.rule].prob;
      worst = std::max(worst, std::abs(pcfg::tree_log_prob(g, probs, t) - std::log(product)));
    }
    out.push_back(make("tree log-probability = enumerated rule product", worst, 1e-12));

    auto net = pcfg::ParseInferenceNet::make(g, rng, pcfg::NetSizes{4, 8, 8, 4, 4});
    Tape tp;
    auto phi = bind_params(tp, net.params(), false);
    const std::vector<pcfg::Sentence> xs{g.parse_sentence("astronomers saw stars with telescopes")};
    auto prop = net.propose(phi, xs, 16, rng, 6);
    const std::vector<pcfg::Sentence> owners(16, xs[0]);
    Var replay = net.score(phi, owners, prop.trees, 6);
    out.push_back(make("parse proposal log q = replayed log q",
                       max_abs_diff(prop.log_q.value(), replay.value()), 1e-10));

    // Total proposal mass over every tree of a finite grammar.
    auto small = pcfg::Grammar::parse(
        "S -> A : 0.3\nS -> B : 0.3\nS -> A B : 0.4\nA -> a : 1.0\nB -> b : 0.5\nB -> c : 0.5\n");
    auto snet = pcfg::ParseInferenceNet::make(small, rng, pcfg::NetSizes{4, 5, 5, 3, 3});
    Tape ts;
    auto sphi = bind_params(ts, snet.params(), false);
    std::vector<pcfg::ParseTree> all;
    derivations(small, {small.start()}, {}, 10, all);
    const std::vector<pcfg::Sentence> sx(all.size(), small.parse_sentence("a b"));
    double mass = 0.0;
    for (double v : snet.score(sphi, sx, all).value().values()) mass += std::exp(v);
    out.push_back(make("parse proposal sums to one over a finite grammar", std::abs(mass - 1.0), 1e-12));
  }
  return out;
}

std::string format_checks(std::span<const CheckResult> results) {
  std::string s;
  char buf[256];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, "%-4s %-60s error %.3g (tolerance %.0e)\n",
                  r.passed ? "PASS" : "FAIL", r.name.c_str(), r.error, r.tolerance);
    s += buf;
  }
  return s;
}

}  // namespace rws
