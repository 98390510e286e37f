#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "rws/check.hpp"
#include "rws/error.hpp"
#include "rws/harness/runner.hpp"

using namespace rws;
using namespace rws::harness;

namespace {

struct Flags {
  std::string config;
  std::string method;
  std::size_t K = 0;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::size_t iterations = 0;
  std::size_t workers = 0;
  // gmm
  std::size_t C = 0, batch = 0, cadence = 0;
  double delta = 0, t_start = 0, t_end = 0;
  std::string init, control;
  // pcfg
  double wallclock = 0;
  std::size_t max_expansions = 0, metric_samples = 0, corpus_size = 0, posterior_samples = 0;
  std::string grammar;
};

void add_common(CLI::App* app, Flags& f, bool sweep) {
  app->add_option("--config", f.config, "INI experiment file")->check(CLI::ExistingFile);
  app->add_option("--out-dir", f.out_dir, "output directory");
  app->add_option("--seed", f.seed, "seed (single runs)");
  app->add_option("--iterations", f.iterations, "training iterations");
  if (!sweep) {
    app->add_option("--method", f.method, "estimator");
    app->add_option("--K", f.K, "particles");
  }
  app->add_option("--workers", f.workers, "parallel cells")->check(CLI::PositiveNumber);
}

// Defaults, then the config file, then explicit flags.
ExperimentConfig build(const CLI::App* app, const Flags& f, Benchmark b) {
  ExperimentConfig c;
  if (!f.config.empty()) c = load_config(f.config);
  c.benchmark = b;
  auto given = [&](const char* name) {
    const auto* o = app->get_option_no_throw(name);
    return o != nullptr && o->count() > 0;
  };
  if (given("--method")) c.methods = {parse_method(f.method)};
  if (given("--K")) c.Ks = {f.K};
  if (given("--seed")) c.seeds = {f.seed};
  if (given("--out-dir")) c.out_dir = f.out_dir;
  if (given("--workers")) c.workers = f.workers;
  if (given("--iterations")) c.gmm.iterations = c.pcfg.iterations = f.iterations;
  if (given("--C")) c.gmm.C = f.C;
  if (given("--delta")) c.gmm.delta = f.delta;
  if (given("--init")) c.gmm.init = gmm::parse_init_mode(f.init);
  if (given("--temperature-start")) c.gmm.temperature_start = f.t_start;
  if (given("--temperature-end")) c.gmm.temperature_end = f.t_end;
  if (given("--control")) {
    if (f.control == "rebar") c.gmm.control = est::ControlKind::rebar;
    else if (f.control == "relax_mlp") c.gmm.control = est::ControlKind::relax_mlp;
    else throw ConfigError("unknown control variate '" + f.control + "'");
  }
  if (given("--batch")) c.gmm.batch = c.pcfg.batch = f.batch;
  if (given("--cadence")) c.gmm.cadence = c.pcfg.cadence = f.cadence;
  if (given("--wallclock-cap")) c.pcfg.wallclock_cap_s = f.wallclock;
  if (given("--max-expansions")) c.pcfg.max_expansions = f.max_expansions;
  if (given("--metric-samples")) c.pcfg.metric_samples = f.metric_samples;
  if (given("--corpus-size")) c.pcfg.corpus_size = f.corpus_size;
  if (given("--grammar")) c.grammar = f.grammar;
  if (given("--posterior-samples")) c.posterior_samples = f.posterior_samples;
  c.validate();
  return c;
}

int report(const SweepResult& r, const ExperimentConfig& c) {
  for (const auto& cell : r.cells) {
    std::printf("%-9s K=%-4zu seed=%-4llu %s", std::string(method_name(cell.method)).c_str(), cell.K,
                static_cast<unsigned long long>(cell.seed), cell.ok ? "ok" : "FAILED");
    if (!cell.ok) std::printf(": %s", cell.error.c_str());
    std::printf("\n");
  }
  std::printf("outputs in %s (config %s)\n", c.out_dir.string().c_str(), config_hash(c).c_str());
  return r.ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient estimators for models with stochastic control flow"};
  app.require_subcommand(1);
  Flags f;

  auto* gmm_cmd = app.add_subcommand("gmm", "train on the Gaussian mixture benchmark");
  add_common(gmm_cmd, f, false);
  gmm_cmd->add_option("--C", f.C, "mixture components");
  gmm_cmd->add_option("--batch", f.batch, "observations per batch");
  gmm_cmd->add_option("--delta", f.delta, "defensive mixture weight for delta-ww");
  gmm_cmd->add_option("--init", f.init, "adverse or uniform");
  gmm_cmd->add_option("--temperature-start", f.t_start, "concrete temperature at the start");
  gmm_cmd->add_option("--temperature-end", f.t_end, "concrete temperature at the end");
  gmm_cmd->add_option("--control", f.control, "relax control variate: relax_mlp or rebar");
  gmm_cmd->add_option("--cadence", f.cadence, "iterations between metric rows");

  auto* pcfg_cmd = app.add_subcommand("pcfg", "train on the grammar benchmark");
  add_common(pcfg_cmd, f, false);
  pcfg_cmd->add_option("--batch", f.batch, "sentences per batch");
  pcfg_cmd->add_option("--cadence", f.cadence, "iterations between metric rows");
  pcfg_cmd->add_option("--wallclock-cap", f.wallclock, "seconds before a run stops");
  pcfg_cmd->add_option("--max-expansions", f.max_expansions, "expansion budget before forcing");
  pcfg_cmd->add_option("--metric-samples", f.metric_samples, "pairs for the sleep-loss proxy");
  pcfg_cmd->add_option("--corpus-size", f.corpus_size, "fixed corpus size, 0 streams");
  pcfg_cmd->add_option("--grammar", f.grammar, "grammar file")->check(CLI::ExistingFile);
  pcfg_cmd->add_option("--posterior-samples", f.posterior_samples, "draws in the posterior dump");

  auto* check_cmd = app.add_subcommand("check", "run the oracle and finite-difference checks");
  std::uint64_t check_seed = 0;
  check_cmd->add_option("--seed", check_seed, "seed for the random test models");

  auto* sweep_cmd = app.add_subcommand("sweep", "run every (method, K, seed) cell of a config");
  add_common(sweep_cmd, f, true);
  sweep_cmd->get_option("--config")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*check_cmd) {
      const auto results = run_checks(check_seed);
      std::fputs(format_checks(results).c_str(), stdout);
      for (const auto& r : results)
        if (!r.passed) return 1;
      return 0;
    }
    if (*sweep_cmd) {
      const auto base = load_config(f.config);
      auto c = build(sweep_cmd, f, base.benchmark);
      return report(run_sweep(c), c);
    }
    const bool is_gmm = static_cast<bool>(*gmm_cmd);
    CLI::App* cmd = is_gmm ? gmm_cmd : pcfg_cmd;
    auto c = build(cmd, f, is_gmm ? Benchmark::gmm : Benchmark::pcfg);
    return report(run_sweep(c), c);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
