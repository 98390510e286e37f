// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance --criteria 1,2,3 [--unit path ...]
//
// Indented lines are the measurements each verdict rests on.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "CLI11.hpp"
#include "rws/ad/nn.hpp"
#include "rws/ad/ops.hpp"
#include "rws/check.hpp"
#include "rws/est/estimators.hpp"
#include "rws/est/relax.hpp"
#include "rws/est/toy.hpp"
#include "rws/gmm/model.hpp"
#include "rws/gmm/train.hpp"
#include "rws/harness/runner.hpp"
#include "rws/parallel/kernels.hpp"
#include "rws/pcfg/train.hpp"

using namespace rws;
using ad::Params;
using ad::Tensor;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) { return harness::quantile(std::move(v), 0.5); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<double> flatten(const Params& p) {
  std::vector<double> out;
  for (const Tensor& t : p) out.insert(out.end(), t.values().begin(), t.values().end());
  return out;
}

bool report(int id, bool pass, const std::string& what) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, what.c_str());
  std::fflush(stdout);
  return pass;
}

template <class... A>
void note(const char* fmt, A... args) {
  std::printf("  ");
  std::printf(fmt, args...);
  std::printf("\n");
  std::fflush(stdout);
}

// 1: exact expectations over all z-tuples on the toy model, K = 2.
bool criterion_1() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const toy::ToyModel m = toy::ToyModel::random(rng);
    const Tensor exact = toy::exact_phi_gradient(m, 2);
    const double rf = max_abs_diff(toy::expected_phi_gradient(m, 2, toy::Estimator::reinforce), exact);
    const double vm = max_abs_diff(toy::expected_phi_gradient(m, 2, toy::Estimator::vimco), exact);
    ad::Tape t;
    ad::Var phi = t.leaf(m.phi);
    const Tensor sleep_exact = t.backward(toy::exact_sleep_loss(phi, m))[phi];
    const double sl = max_abs_diff(toy::expected_sleep_gradient(m), sleep_exact);
    note("model %llu: reinforce %.2e  vimco %.2e  sleep %.2e", static_cast<unsigned long long>(seed),
         rf, vm, sl);
    worst = std::max({worst, rf, vm, sl});
  }
  const double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "enumerated gradients max error %.2e (tol 1e-8), %.1f s (limit 60 s)",
                worst, secs);
  return report(1, worst <= 1e-8 && secs < 60.0, buf);
}

// 2: Monte Carlo mean of RELAX draws against the enumerated gradient.
bool criterion_2() {
  const auto t0 = Clock::now();
  const std::size_t draws = 200000;
  Rng rng(7);
  const toy::ToyModel m = toy::ToyModel::random(rng);
  const Tensor exact = toy::exact_phi_gradient(m, 2);

  est::ControlVariate zero = est::ControlVariate::relax_mlp(toy::kLatents, rng);
  for (Tensor& p : zero.params()) std::fill(p.values().begin(), p.values().end(), 0.0);
  const est::ControlVariate random_cv = est::ControlVariate::relax_mlp(toy::kLatents, rng);

  bool pass = true;
  double worst_z = 0.0;
  for (const auto& [name, cv] : {std::pair<const char*, const est::ControlVariate*>{"zero", &zero},
                                 {"random", &random_cv}}) {
    const auto summary = parallel::summarize_draws(draws, [&, cv = cv, name = name](std::size_t i) {
      Rng r = make_stream(11, name, i, "relax-draw");
      const Tensor g = toy::relax_phi_gradient(m, *cv, 2, r);
      return std::vector<double>(g.values().begin(), g.values().end());
    });
    double z = 0.0;
    for (std::size_t d = 0; d < exact.size(); ++d) {
      const double se = summary.std_error[d];
      const double dev = std::abs(summary.mean[d] - exact[d]);
      if (se > 0.0) z = std::max(z, dev / se);
      else if (dev > 1e-12) z = INFINITY;
    }
    note("%s control: max |mean - exact| / se = %.2f over %zu coordinates", name, z, exact.size());
    worst_z = std::max(worst_z, z);
    pass = pass && z <= 4.0;
  }
  const double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "RELAX mean of 2e5 draws within %.2f SE (limit 4), %.1f s (limit 300 s)",
                worst_z, secs);
  return report(2, pass && secs < 300.0, buf);
}

// 3: bias of the SNIS wake-phi gradient against the exact posterior
// expectation, by K.
bool criterion_3() {
  const auto t0 = Clock::now();
  const std::size_t C = 20, B = 10, repeats = 1000;
  const std::vector<std::size_t> Ks{1, 10, 100, 1000};
  std::vector<std::vector<double>> bias(Ks.size()), floor(Ks.size());
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const gmm::GmmModel m = gmm::GmmModel::make(gmm::true_theta(C));
    Rng data = make_stream(seed, "gmm", 0, "snis-data");
    Rng init = make_stream(seed, "gmm", 0, "snis-init");
    const auto x = gmm::sample_batch(m, B, data);
    const auto net = gmm::InferenceNet::make(C, init);
    const auto exact = flatten(gmm::exact_wake_phi_gradient(net, m, x));
    for (std::size_t k = 0; k < Ks.size(); ++k) {
      Rng particles = make_stream(seed, "gmm", Ks[k], "snis-particles");
      std::vector<double> mean(exact.size(), 0.0), sq(exact.size(), 0.0);
      for (std::size_t r = 0; r < repeats; ++r) {
        const auto g = flatten(gmm::snis_phi_gradient(net, m, x, Ks[k], particles));
        for (std::size_t d = 0; d < g.size(); ++d) {
          mean[d] += g[d] / repeats;
          sq[d] += g[d] * g[d] / repeats;
        }
      }
      double b2 = 0.0, v = 0.0;
      for (std::size_t d = 0; d < exact.size(); ++d) {
        b2 += (mean[d] - exact[d]) * (mean[d] - exact[d]);
        v += std::max(0.0, sq[d] - mean[d] * mean[d]) / (repeats - 1);
      }
      bias[k].push_back(std::sqrt(b2));
      floor[k].push_back(std::sqrt(v));
    }
  }
  bool monotone = true;
  double previous = INFINITY;
  for (std::size_t k = 0; k < Ks.size(); ++k) {
    const double b = median(bias[k]);
    note("K=%-4zu median bias norm %.4e  (median Monte Carlo noise norm %.4e)", Ks[k], b,
         median(floor[k]));
    monotone = monotone && b < previous;
    previous = b;
  }
  const double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "SNIS bias norm median over 10 seeds %s in K, %.1f s (limit 300 s)",
                monotone ? "decreases" : "does not decrease", secs);
  return report(3, monotone && secs < 300.0, buf);
}

// 6: grad-std of the phi estimators at one mid-training parameter setting.
bool criterion_6() {
  const auto t0 = Clock::now();
  gmm::GmmConfig base;
  base.method = Method::ww;
  base.K = 20;
  base.iterations = 50000;
  gmm::GmmTrainer trainer(base);
  const std::size_t mid = base.iterations / 2;
  while (trainer.iteration < mid) trainer.step();

  Rng data = make_stream(0, "gmm", 0, "grad-std-batch");
  const auto x = gmm::sample_batch(trainer.truth, base.batch, data);
  const double temperature = gmm::temperature_at(base, mid);
  std::map<Method, std::vector<double>> stds;
  for (Method method : {Method::ww, Method::ws, Method::reinforce}) {
    gmm::GmmConfig cfg = base;
    cfg.method = method;
    for (std::uint64_t rep = 0; rep < 10; ++rep) {
      Rng rng = make_stream(rep, "gmm", cfg.K, "grad-std-" + method_name(method));
      stds[method].push_back(gmm::grad_std(cfg, trainer.state, x, temperature, 10, rng));
    }
    note("%-9s K=20 at iteration %zu: median grad-std %.5f", method_name(method).c_str(), mid,
         median(stds[method]));
  }
  const double ww = median(stds[Method::ww]), ws = median(stds[Method::ws]),
               rf = median(stds[Method::reinforce]);
  char buf[200];
  std::snprintf(buf, sizeof buf, "grad-std ww %.5f < reinforce %.5f and ws %.5f < reinforce, %.1f s",
                ww, rf, ws, seconds_since(t0));
  return report(6, ww < rf && ws < rf, buf);
}

// Terminal GMM rows, trained once per (method, K, init, seed).
class GmmRuns {
 public:
  const gmm::MetricRow& get(Method method, std::size_t K, gmm::InitMode init, std::uint64_t seed) {
    const auto key = std::make_tuple(method, K, init, seed);
    auto it = runs_.find(key);
    if (it != runs_.end()) return it->second;
    gmm::GmmConfig cfg;
    cfg.method = method;
    cfg.K = K;
    cfg.init = init;
    cfg.seed = seed;
    cfg.cadence = cfg.iterations;  // metrics do not feed back into training
    const auto t0 = Clock::now();
    const auto run = gmm::train_gmm(cfg);
    const auto& row = run.rows.back();
    note("%-8s K=%-2zu %-7s seed %llu: l2_prior %.4f l2_posterior %.4f support %zu (%.0f s)",
         method_name(method).c_str(), K, std::string(gmm::init_mode_name(init)).c_str(),
         static_cast<unsigned long long>(seed), row.l2_prior, row.l2_posterior, row.support_size,
         seconds_since(t0));
    return runs_.emplace(key, row).first->second;
  }

  template <class F>
  double median_over_seeds(Method method, std::size_t K, gmm::InitMode init, F metric) {
    std::vector<double> v;
    for (std::uint64_t seed = 0; seed < kSeeds; ++seed) v.push_back(metric(get(method, K, init, seed)));
    return median(v);
  }

  static constexpr std::uint64_t kSeeds = 5;

 private:
  std::map<std::tuple<Method, std::size_t, gmm::InitMode, std::uint64_t>, gmm::MetricRow> runs_;
};

double l2_prior(const gmm::MetricRow& r) { return r.l2_prior; }
double l2_posterior(const gmm::MetricRow& r) { return r.l2_posterior; }
double support(const gmm::MetricRow& r) { return static_cast<double>(r.support_size); }

bool criterion_4(GmmRuns& runs) {
  const auto adverse = gmm::InitMode::adverse;
  const double ww20 = runs.median_over_seeds(Method::ww, 20, adverse, l2_prior);
  const double ww2 = runs.median_over_seeds(Method::ww, 2, adverse, l2_prior);
  const double dww2 = runs.median_over_seeds(Method::delta_ww, 2, adverse, l2_posterior);
  const double ww2q = runs.median_over_seeds(Method::ww, 2, adverse, l2_posterior);
  const double ws20 = runs.median_over_seeds(Method::ws, 20, adverse, l2_posterior);
  const double ws2 = runs.median_over_seeds(Method::ws, 2, adverse, l2_posterior);
  const bool a = ww20 < ww2, b = dww2 < ww2q, c = ws20 <= ws2;
  note("(a) ww K=20 l2_prior %.4f < ww K=2 %.4f: %s", ww20, ww2, a ? "yes" : "no");
  note("(b) delta-ww K=2 l2_posterior %.4f < ww K=2 %.4f: %s", dww2, ww2q, b ? "yes" : "no");
  note("(c) ws K=20 l2_posterior %.4f <= ws K=2 %.4f: %s", ws20, ws2, c ? "yes" : "no");
  return report(4, a && b && c, "GMM adverse-init orderings (a), (b), (c), medians over 5 seeds at 50k iterations");
}

bool criterion_5(GmmRuns& runs) {
  const auto adverse = gmm::InitMode::adverse;
  const double ws = runs.median_over_seeds(Method::ws, 2, adverse, support);
  const double dww = runs.median_over_seeds(Method::delta_ww, 2, adverse, support);
  char buf[160];
  std::snprintf(buf, sizeof buf, "K=2 median support: ws %.0f < 20, delta-ww %.0f = 20", ws, dww);
  return report(5, ws < 20.0 && dww == 20.0, buf);
}

bool criterion_7(GmmRuns& runs) {
  const auto uniform = gmm::InitMode::uniform;
  const double ws = runs.median_over_seeds(Method::ws, 20, uniform, l2_posterior);
  const double ww = runs.median_over_seeds(Method::ww, 20, uniform, l2_posterior);
  char buf[160];
  std::snprintf(buf, sizeof buf, "uniform init K=20 median l2_posterior ws %.4f <= ww %.4f", ws, ww);
  return report(7, ws <= ww, buf);
}

// 8: PCFG WS and REINFORCE at K = 20, three seeds, fixed iteration budget
// under a wall-clock cap.
bool criterion_8(std::size_t iterations, double cap_s) {
  const auto g = pcfg::Grammar::load(std::string(RWS_ASSET_DIR) + "/astronomers.pcfg");
  const double initial = pcfg::production_kl(pcfg::rule_probs(pcfg::uniform_logits(g)), pcfg::true_probs(g));
  note("uniform-init production KL %.5f", initial);
  std::map<Method, std::vector<double>> terminal;
  bool ws_within_cap = true;
  for (Method method : {Method::ws, Method::reinforce}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      pcfg::PcfgConfig cfg;
      cfg.method = method;
      cfg.K = 20;
      cfg.seed = seed;
      cfg.iterations = iterations;
      cfg.cadence = iterations;
      cfg.wallclock_cap_s = cap_s;
      const auto run = pcfg::train_pcfg(cfg, g);
      const auto& row = run.rows.back();
      note("%-9s seed %llu: production KL %.5f after %zu iterations, %.0f s%s",
           method_name(method).c_str(), static_cast<unsigned long long>(seed), row.production_kl,
           row.iteration, row.wallclock_s, run.capped ? " (capped)" : "");
      terminal[method].push_back(row.production_kl);
      if (method == Method::ws) ws_within_cap = ws_within_cap && row.wallclock_s <= 7200.0;
    }
  }
  const double ws = median(terminal[Method::ws]), rf = median(terminal[Method::reinforce]);
  const bool halved = ws <= 0.5 * initial;
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "ws K=20 median KL %.5f is %.0f%% below uniform init (need 50%%) and < reinforce %.5f",
                ws, 100.0 * (1.0 - ws / initial), rf);
  return report(8, halved && ws_within_cap && ws < rf, buf);
}

// 9: the checks the CLI exposes plus every unit suite.
bool criterion_9(const std::vector<std::string>& units) {
  const auto t0 = Clock::now();
  const auto checks = run_checks(0);
  bool pass = true;
  for (const auto& c : checks) {
    note("%s %-50s error %.2e tol %.0e", c.passed ? "ok  " : "FAIL", c.name.c_str(), c.error, c.tolerance);
    pass = pass && c.passed;
  }
  for (const auto& u : units) {
    const auto t = Clock::now();
    const int rc = std::system((u + " > /dev/null 2>&1").c_str());
    note("%s %s (%.1f s)", rc == 0 ? "ok  " : "FAIL", u.c_str(), seconds_since(t));
    pass = pass && rc == 0;
  }
  const double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu oracle checks and %zu unit suites, %.1f s (limit 600 s)",
                checks.size(), units.size(), secs);
  return report(9, pass && secs < 600.0, buf);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> criteria{1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<std::string> units;
  std::size_t pcfg_iterations = 4000;
  double pcfg_cap_s = 1800.0;
  app.add_option("--criteria", criteria, "criteria to run")->delimiter(',');
  app.add_option("--unit", units, "unit-suite executables for criterion 9");
  app.add_option("--pcfg-iterations", pcfg_iterations, "criterion 8 iterations per run");
  app.add_option("--pcfg-cap", pcfg_cap_s, "criterion 8 wall-clock cap per run, seconds");
  CLI11_PARSE(app, argc, argv);

  GmmRuns runs;
  bool all = true;
  for (int c : std::set<int>(criteria.begin(), criteria.end())) {
    bool ok = false;
    try {
      switch (c) {
        case 1: ok = criterion_1(); break;
        case 2: ok = criterion_2(); break;
        case 3: ok = criterion_3(); break;
        case 4: ok = criterion_4(runs); break;
        case 5: ok = criterion_5(runs); break;
        case 6: ok = criterion_6(); break;
        case 7: ok = criterion_7(runs); break;
        case 8: ok = criterion_8(pcfg_iterations, pcfg_cap_s); break;
        case 9: ok = criterion_9(units); break;
        default: ok = report(c, false, "no such criterion");
      }
    } catch (const std::exception& e) {
      ok = report(c, false, std::string("error: ") + e.what());
    }
    all = all && ok;
  }
  return all ? 0 : 1;
}
