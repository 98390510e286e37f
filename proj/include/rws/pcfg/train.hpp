#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rws/method.hpp"
#include "rws/optim/adam.hpp"
#include "rws/pcfg/net.hpp"

namespace rws::pcfg {

struct PcfgConfig {
  Method method = Method::ws;  // ws, ww, vimco or reinforce
  std::size_t K = 20;
  std::size_t iterations = 100000;
  double wallclock_cap_s = 7200.0;
  std::uint64_t seed = 0;
  std::size_t batch = 2;
  std::size_t max_expansions = 50;
  std::size_t cadence = 100;
  std::size_t metric_samples = 200;  // (z, x) pairs for the sleep-loss proxy
  std::size_t corpus_size = 0;       // 0 streams fresh sentences every batch
  NetSizes net;
  optim::AdamConfig adam;

  void validate() const;
};

struct PcfgRow {
  std::size_t iteration = 0;
  double production_kl = 0.0;
  double sleep_loss_proxy = 0.0;
  double wallclock_s = 0.0;
};

// Uniform rule logits.
ad::Params uniform_logits(const Grammar& g);
RuleProbs rule_probs(const ad::Params& logits);

// log p_theta(z) for a batch of trees, [trees.size()]; differentiable in theta.
ad::Var trees_log_prior(std::span<const ad::Var> theta, const Grammar& g,
                        std::span<const ParseTree> trees);

// Mean of -log q(z | s(z)) over the pairs; with (z, x) from the true grammar
// this estimates the expected KL to the true posterior up to H(z | x).
double sleep_loss_proxy(const ParseInferenceNet& net, std::span<const ParseTree> trees,
                        std::span<const Sentence> xs, std::size_t max_expansions);

struct PcfgGradients {
  ad::Params theta;  // loss gradients, descent direction
  ad::Params phi;
  double elbo = 0.0;
};

PcfgGradients estimate_pcfg_gradients(const PcfgConfig& cfg, const Grammar& g,
                                      const ad::Params& theta, const ParseInferenceNet& net,
                                      std::span<const Sentence> xs, Rng& particles, Rng& sleep);

struct PcfgTrainer {
  PcfgTrainer(const PcfgConfig& cfg, Grammar grammar);
  void step();
  PcfgRow measure() const;
  double elapsed_s() const;

  PcfgConfig cfg;
  Grammar grammar;
  RuleProbs truth;
  ad::Params theta;
  ParseInferenceNet net;
  std::vector<ParseTree> eval_trees;
  std::vector<Sentence> eval_x;
  std::vector<Sentence> corpus;
  std::size_t iteration = 0;
  Rng data_rng, particle_rng, sleep_rng;
  optim::Adam theta_opt, phi_opt;
  std::chrono::steady_clock::time_point started;
};

struct PcfgRun {
  std::vector<PcfgRow> rows;
  ad::Params theta;
  ParseInferenceNet net;
  bool capped = false;  // stopped by the wall-clock cap
};

// Rows at iteration 0, every cadence iterations and at the last iteration.
PcfgRun train_pcfg(const PcfgConfig& cfg, const Grammar& g,
                   const std::function<void(const PcfgRow&)>& on_row = {});

struct PosteriorSample {
  std::string tree;  // bracketed
  std::string sentence;
  std::size_t count = 0;
  double max_log_weight = 0.0;
};

// n draws from q(z | x), grouped by tree and sorted by count.
std::vector<PosteriorSample> posterior_samples(const ParseInferenceNet& net, const Grammar& g,
                                               const ad::Params& theta, const Sentence& x,
                                               std::size_t n, std::size_t max_expansions,
                                               Rng& rng);
std::string format_posterior(std::span<const PosteriorSample> samples, std::size_t n);

std::string pcfg_csv_header();
std::string pcfg_csv_row(const PcfgConfig& cfg, const PcfgRow& row);

}  // namespace rws::pcfg
