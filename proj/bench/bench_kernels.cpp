#include <cmath>
#include <random>

#include <benchmark/benchmark.h>

#include "rws/parallel/kernels.hpp"
#include "rws/rng.hpp"

using namespace rws;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

template <bool Parallel>
void BM_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      parallel::matmul(a, b, out, n, n, n);
    else
      parallel::matmul_serial(a, b, out, n, n, n);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}

template <bool Parallel>
void BM_log_mean_exp(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 20;
  const auto x = random_values(rows * cols, 3);
  std::vector<double> out(rows);
  for (auto _ : state) {
    if constexpr (Parallel)
      parallel::log_mean_exp_rows(x, rows, cols, out);
    else
      parallel::log_mean_exp_rows_serial(x, rows, cols, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(rows * cols));
}

// Each draw seeds its own stream, as Monte Carlo checks do.
template <bool Parallel>
void BM_summarize_draws(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto draw = [](std::size_t i) {
    Rng rng = make_stream(5, "bench", i, "draw");
    std::normal_distribution<double> d;
    std::vector<double> v(8);
    for (double& x : v) x = std::exp(d(rng));
    return v;
  };
  for (auto _ : state) {
    auto s = Parallel ? parallel::summarize_draws(n, draw) : parallel::summarize_draws_serial(n, draw);
    benchmark::DoNotOptimize(s.mean.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n));
}

}  // namespace

BENCHMARK(BM_matmul<false>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_matmul<true>)->Name("matmul/parallel")->Arg(64)->Arg(256)->UseRealTime();
BENCHMARK(BM_log_mean_exp<false>)->Name("log_mean_exp/serial")->Arg(1 << 14);
BENCHMARK(BM_log_mean_exp<true>)->Name("log_mean_exp/parallel")->Arg(1 << 14)->UseRealTime();
BENCHMARK(BM_summarize_draws<false>)->Name("summarize_draws/serial")->Arg(1 << 14);
BENCHMARK(BM_summarize_draws<true>)->Name("summarize_draws/parallel")->Arg(1 << 14)->UseRealTime();

BENCHMARK_MAIN();
