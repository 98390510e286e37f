#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

// OpenMP kernels and their serial references. Every parallel kernel splits
// work into independent units whose results are combined in a fixed order,
// so both versions return bit-identical output for any thread count.
namespace rws::parallel {

// out[m,n] = a[m,k] b[k,n], rows of out split across threads.
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_serial(std::span<const double> a, std::span<const double> b, std::span<double> out,
                   std::size_t m, std::size_t k, std::size_t n);

// out[r] = log (1/cols) sum_c exp x[r,c], the per-row IWAE bound.
void log_mean_exp_rows(std::span<const double> x, std::size_t rows, std::size_t cols,
                       std::span<double> out);
void log_mean_exp_rows_serial(std::span<const double> x, std::size_t rows, std::size_t cols,
                              std::span<double> out);

struct DrawSummary {
  std::vector<double> mean;
  std::vector<double> std_error;  // sample std / sqrt(n)
  std::size_t n = 0;
};

// Mean and standard error of n independent vector draws. draw(i) must depend
// only on i (seed its own stream from i) and return the same length each time.
using Draw = std::function<std::vector<double>(std::size_t)>;
DrawSummary summarize_draws(std::size_t n, const Draw& draw);
DrawSummary summarize_draws_serial(std::size_t n, const Draw& draw);

int max_threads();

}  // namespace rws::parallel
