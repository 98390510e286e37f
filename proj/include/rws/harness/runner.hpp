#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rws/harness/config.hpp"

namespace rws::harness {

struct CellResult {
  Method method = Method::ws;
  std::size_t K = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::filesystem::path csv;
  std::filesystem::path posterior;  // pcfg only
  std::map<std::string, double> terminal;  // last metrics row
  bool capped = false;                     // pcfg wall-clock cap reached
};

// Trains one cell and writes its metrics CSV (and posterior dump) under
// cfg.out_dir. Failures are caught and reported in the result.
CellResult run_cell(const ExperimentConfig& cfg, Method method, std::size_t K, std::uint64_t seed);

struct SummaryRow {
  Benchmark benchmark = Benchmark::gmm;
  Method method = Method::ws;
  std::size_t K = 0;
  std::string metric;
  double median = 0.0, q1 = 0.0, q3 = 0.0;
  std::size_t n_seeds = 0;
};

// Quantile with linear interpolation between order statistics:
// position q (n - 1) in the sorted sample.
double quantile(std::vector<double> values, double q);

// One row per (method, K, terminal metric) over the successful seeds, plus a
// `failed_runs` row for any cell with failures.
std::vector<SummaryRow> summarize(const ExperimentConfig& cfg, const std::vector<CellResult>& cells);
std::string summary_csv(const std::vector<SummaryRow>& rows);

struct SweepResult {
  std::vector<CellResult> cells;  // in (method, K, seed) order
  std::vector<SummaryRow> summary;
  bool ok = false;
};

// Runs every cell on up to cfg.workers threads, then writes summary.csv,
// config.ini and manifest.json to cfg.out_dir.
SweepResult run_sweep(const ExperimentConfig& cfg);

// Writes through a temporary file in the same directory and renames it.
void write_atomic(const std::filesystem::path& path, const std::string& content);

std::string code_version();

}  // namespace rws::harness
