#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rws/gmm/train.hpp"
#include "rws/pcfg/train.hpp"

namespace rws::harness {

enum class Benchmark { gmm, pcfg };

Benchmark parse_benchmark(std::string_view name);
std::string_view benchmark_name(Benchmark b);

// One experiment: the cartesian product methods x Ks x seeds of a benchmark.
// The per-benchmark configs carry every other knob; their method, K and seed
// fields are overwritten per cell.
//
// INI schema (every key optional, unknown keys rejected):
//   [experiment] benchmark = gmm|pcfg, methods = ws, ww, ..., K = 2, 20,
//                seeds = 0, 1, out_dir, workers
//   [gmm]        iterations, C, batch, delta, init = adverse|uniform,
//                temperature_start, temperature_end, cadence, test_points,
//                grad_std_repeats, control = relax_mlp|rebar
//   [pcfg]       iterations, wallclock_cap_s, batch, max_expansions, cadence,
//                metric_samples, corpus_size, grammar, posterior_sentence,
//                posterior_samples
//   [adam]       lr, beta1, beta2, eps
struct ExperimentConfig {
  Benchmark benchmark = Benchmark::gmm;
  std::vector<Method> methods{Method::ws};
  std::vector<std::size_t> Ks{2};
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out_dir = "out";
  std::size_t workers = 1;

  gmm::GmmConfig gmm;
  pcfg::PcfgConfig pcfg;
  std::string grammar = std::string(RWS_ASSET_DIR) + "/astronomers.pcfg";
  std::string posterior_sentence = "astronomers saw stars with telescopes";
  std::size_t posterior_samples = 1000;

  // Throws ConfigError; checks every cell's benchmark config as well.
  void validate() const;
  gmm::GmmConfig gmm_cell(Method m, std::size_t K, std::uint64_t seed) const;
  pcfg::PcfgConfig pcfg_cell(Method m, std::size_t K, std::uint64_t seed) const;
};

ExperimentConfig parse_config(std::string_view ini);
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical INI text holding every field; parse_config(serialize(c)) == c.
std::string serialize(const ExperimentConfig& c);
// 16 hex digits of a 64-bit FNV-1a hash of serialize(c).
std::string config_hash(const ExperimentConfig& c);

}  // namespace rws::harness
