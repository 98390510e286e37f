#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rws/est/relax.hpp"
#include "rws/gmm/model.hpp"
#include "rws/method.hpp"
#include "rws/optim/adam.hpp"

namespace rws::gmm {

struct GmmConfig {
  Method method = Method::ww;
  std::size_t K = 2;
  std::size_t iterations = 50000;
  std::uint64_t seed = 0;
  InitMode init = InitMode::adverse;
  std::size_t C = 20;
  std::size_t batch = 100;
  double delta = 0.2;
  double temperature_start = 3.0;
  double temperature_end = 0.5;
  std::size_t cadence = 100;
  std::size_t test_points = 100;
  std::size_t grad_std_repeats = 10;
  est::ControlKind control = est::ControlKind::relax_mlp;
  optim::AdamConfig adam;

  // Throws ConfigError on an invalid combination.
  void validate() const;
};

struct MetricRow {
  std::size_t iteration = 0;
  double l2_prior = 0.0;
  double l2_posterior = 0.0;
  double grad_std = 0.0;
  std::size_t support_size = 0;
};

struct GmmState {
  GmmModel model;
  InferenceNet net;
  std::optional<est::ControlVariate> control;  // relax only
};

// Parameters at iteration 0. Theta follows the init mode; the inference net
// and control variate are drawn from streams keyed by the seed alone, so all
// methods and K start from the same network.
GmmState initial_state(const GmmConfig& cfg);

// Gradients of the losses each parameter group descends.
struct StepGradients {
  Params theta;
  Params phi;
  Params rho;    // relax only, and only when requested
  double elbo = 0.0;  // IWAE bound on the batch under the sampling proposal
};

StepGradients estimate_gradients(const GmmConfig& cfg, const GmmState& state,
                                 std::span<const double> x, double temperature, Rng& particles,
                                 Rng& sleep, bool with_rho = true);

// Linear schedule from temperature_start at iteration 0 to temperature_end
// at the final iteration.
double temperature_at(const GmmConfig& cfg, std::size_t iteration);

// All metrics at the current parameters. grad_std uses a fresh batch from
// `rng` and grad_std_repeats draws of the method's phi-gradient.
MetricRow measure(const GmmConfig& cfg, const GmmState& state, const GmmModel& truth,
                  std::span<const double> test_x, std::size_t iteration, Rng& rng);

double grad_std(const GmmConfig& cfg, const GmmState& state, std::span<const double> x,
                double temperature, std::size_t repeats, Rng& rng);

struct GmmRun {
  std::vector<MetricRow> rows;
  GmmState final_state;
};

// Rows are emitted at iterations 0, cadence, 2 cadence, ... and at the final
// iteration, each measured after that many updates.
GmmRun train_gmm(const GmmConfig& cfg,
                 const std::function<void(const MetricRow&)>& on_row = {});

// The per-run state advanced by one update. Exposed for tests.
struct GmmTrainer {
  explicit GmmTrainer(const GmmConfig& cfg);
  void step();

  GmmConfig cfg;
  GmmModel truth;
  GmmState state;
  std::vector<double> test_x;
  std::size_t iteration = 0;
  Rng data_rng, particle_rng, sleep_rng, metric_rng;
  optim::Adam theta_opt, phi_opt;
  std::optional<optim::Adam> rho_opt;
};

std::string gmm_csv_header();
std::string gmm_csv_row(const GmmConfig& cfg, const MetricRow& row);

}  // namespace rws::gmm
