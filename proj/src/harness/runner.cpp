#include "rws/harness/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <thread>

#include "json.hpp"

#include "rws/error.hpp"

namespace rws::harness {

namespace fs = std::filesystem;

namespace {

std::string cell_stem(Benchmark b, Method m, std::size_t K, std::uint64_t seed) {
  return std::string(benchmark_name(b)) + "_" + std::string(method_name(m)) + "_K" +
         std::to_string(K) + "_seed" + std::to_string(seed);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void run_gmm_cell(const ExperimentConfig& cfg, CellResult& r) {
  const auto c = cfg.gmm_cell(r.method, r.K, r.seed);
  const auto run = gmm::train_gmm(c);
  std::string csv = gmm::gmm_csv_header() + "\n";
  for (const auto& row : run.rows) csv += gmm::gmm_csv_row(c, row) + "\n";
  write_atomic(r.csv, csv);
  const auto& last = run.rows.back();
  r.terminal = {{"l2_prior", last.l2_prior},
                {"l2_posterior", last.l2_posterior},
                {"grad_std", last.grad_std},
                {"support_size", static_cast<double>(last.support_size)}};
}

void run_pcfg_cell(const ExperimentConfig& cfg, CellResult& r) {
  const auto c = cfg.pcfg_cell(r.method, r.K, r.seed);
  const auto g = pcfg::Grammar::load(cfg.grammar);
  const auto sentence = g.parse_sentence(cfg.posterior_sentence);
  const auto run = pcfg::train_pcfg(c, g);
  std::string csv = pcfg::pcfg_csv_header() + "\n";
  for (const auto& row : run.rows) csv += pcfg::pcfg_csv_row(c, row) + "\n";
  write_atomic(r.csv, csv);
  Rng rng = make_stream(r.seed, "pcfg", r.K, "posterior");
  const auto samples = pcfg::posterior_samples(run.net, g, run.theta, sentence,
                                               cfg.posterior_samples, c.max_expansions, rng);
  write_atomic(r.posterior, "# q(z | x) for x = " + cfg.posterior_sentence +
                                "\n# frequency\tcount\tmax_log_weight\ttree\n" +
                                pcfg::format_posterior(samples, cfg.posterior_samples));
  const auto& last = run.rows.back();
  r.capped = run.capped;
  r.terminal = {{"production_kl", last.production_kl},
                {"sleep_loss_proxy", last.sleep_loss_proxy},
                {"wallclock_s", last.wallclock_s},
                {"iterations", static_cast<double>(last.iteration)}};
}

}  // namespace

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string code_version() { return std::string(RWS_VERSION) + "+" + RWS_GIT_COMMIT; }

CellResult run_cell(const ExperimentConfig& cfg, Method method, std::size_t K, std::uint64_t seed) {
  CellResult r;
  r.method = method;
  r.K = K;
  r.seed = seed;
  const std::string stem = cell_stem(cfg.benchmark, method, K, seed);
  r.csv = cfg.out_dir / (stem + ".csv");
  if (cfg.benchmark == Benchmark::pcfg) r.posterior = cfg.out_dir / (stem + "_posterior.txt");
  try {
    if (cfg.benchmark == Benchmark::gmm) run_gmm_cell(cfg, r);
    else run_pcfg_cell(cfg, r);
    r.ok = true;
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
  }
  return r;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile level outside [0, 1]");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::vector<SummaryRow> summarize(const ExperimentConfig& cfg, const std::vector<CellResult>& cells) {
  std::vector<SummaryRow> rows;
  for (Method m : cfg.methods)
    for (std::size_t K : cfg.Ks) {
      std::map<std::string, std::vector<double>> values;
      std::size_t total = 0, failed = 0;
      for (const auto& c : cells) {
        if (c.method != m || c.K != K) continue;
        ++total;
        if (!c.ok) {
          ++failed;
          continue;
        }
        for (const auto& [name, v] : c.terminal) values[name].push_back(v);
      }
      for (const auto& [name, v] : values) {
        rows.push_back({cfg.benchmark, m, K, name, quantile(v, 0.5), quantile(v, 0.25),
                        quantile(v, 0.75), v.size()});
      }
      if (failed > 0) {
        const auto f = static_cast<double>(failed);
        rows.push_back({cfg.benchmark, m, K, "failed_runs", f, f, f, total});
      }
    }
  return rows;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string s = "benchmark,method,K,metric,median,q1,q3,n_seeds\n";
  for (const auto& r : rows) {
    s += std::string(benchmark_name(r.benchmark)) + "," + std::string(method_name(r.method)) + "," +
         std::to_string(r.K) + "," + r.metric + "," + fmt(r.median) + "," + fmt(r.q1) + "," +
         fmt(r.q3) + "," + std::to_string(r.n_seeds) + "\n";
  }
  return s;
}

SweepResult run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  struct Cell {
    Method m;
    std::size_t K;
    std::uint64_t seed;
  };
  std::vector<Cell> todo;
  for (Method m : cfg.methods)
    for (std::size_t K : cfg.Ks)
      for (std::uint64_t s : cfg.seeds) todo.push_back({m, K, s});

  SweepResult out;
  out.cells.resize(todo.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < todo.size();)
      out.cells[i] = run_cell(cfg, todo[i].m, todo[i].K, todo[i].seed);
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t n = std::min(cfg.workers, todo.size());
    for (std::size_t w = 1; w < n; ++w) pool.emplace_back(worker);
    worker();
  }
  out.ok = std::all_of(out.cells.begin(), out.cells.end(), [](const auto& c) { return c.ok; });
  out.summary = summarize(cfg, out.cells);

  write_atomic(cfg.out_dir / "summary.csv", summary_csv(out.summary));
  write_atomic(cfg.out_dir / "config.ini", serialize(cfg));
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : out.cells) {
    nlohmann::json j{{"method", method_name(c.method)},
                     {"K", c.K},
                     {"seed", c.seed},
                     {"status", c.ok ? "ok" : "failed"},
                     {"csv", c.csv.filename().string()}};
    if (!c.ok) j["error"] = c.error;
    if (!c.posterior.empty()) j["posterior"] = c.posterior.filename().string();
    if (cfg.benchmark == Benchmark::pcfg) j["wallclock_capped"] = c.capped;
    nlohmann::json terminal = nlohmann::json::object();
    for (const auto& [k, v] : c.terminal) terminal[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(fmt(v));
    j["terminal"] = terminal;
    cells.push_back(j);
  }
  nlohmann::json manifest{{"benchmark", benchmark_name(cfg.benchmark)},
                          {"config_hash", config_hash(cfg)},
                          {"code_version", code_version()},
                          {"config_file", "config.ini"},
                          {"summary_file", "summary.csv"},
                          {"status", out.ok ? "ok" : "failed"},
                          {"cells", cells}};
  write_atomic(cfg.out_dir / "manifest.json", manifest.dump(2) + "\n");
  return out;
}

}  // namespace rws::harness
