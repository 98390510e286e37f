#include "rws/parallel/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <stdexcept>

#include <omp.h>

#include "rws/error.hpp"

namespace rws::parallel {

namespace {

void check_matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
                  std::size_t m, std::size_t k, std::size_t n) {
  if (a.size() != m * k || b.size() != k * n || out.size() != m * n)
    throw ShapeError("matmul kernel: buffer sizes do not match the shape");
}

void matmul_row(const double* a, const double* b, double* o, std::size_t k, std::size_t n) {
  std::fill(o, o + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double ap = a[p];
    const double* br = b + p * n;
    for (std::size_t j = 0; j < n; ++j) o[j] += ap * br[j];
  }
}

double log_mean_exp(const double* x, std::size_t cols) {
  const double m = *std::max_element(x, x + cols);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (std::size_t c = 0; c < cols; ++c) s += std::exp(x[c] - m);
  return m + std::log(s / static_cast<double>(cols));
}

void check_rows(std::span<const double> x, std::size_t rows, std::size_t cols,
                std::span<double> out) {
  if (cols == 0) throw ShapeError("log-mean-exp over an empty row");
  if (x.size() != rows * cols || out.size() != rows) throw ShapeError("log-mean-exp buffer sizes");
}

DrawSummary reduce(std::vector<std::vector<double>>& draws) {
  DrawSummary s;
  s.n = draws.size();
  if (draws.empty()) return s;
  const std::size_t d = draws[0].size();
  s.mean.assign(d, 0.0);
  s.std_error.assign(d, 0.0);
  for (const auto& v : draws) {
    if (v.size() != d) throw ShapeError("draws of different lengths");
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += v[j];
  }
  for (double& m : s.mean) m /= static_cast<double>(s.n);
  if (s.n > 1) {
    for (const auto& v : draws)
      for (std::size_t j = 0; j < d; ++j) s.std_error[j] += (v[j] - s.mean[j]) * (v[j] - s.mean[j]);
    for (double& e : s.std_error)
      e = std::sqrt(e / static_cast<double>(s.n - 1) / static_cast<double>(s.n));
  }
  return s;
}

}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  check_matmul(a, b, out, m, k, n);
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    matmul_row(a.data() + i * k, b.data(), out.data() + i * n, k, n);
}

void matmul_serial(std::span<const double> a, std::span<const double> b, std::span<double> out,
                   std::size_t m, std::size_t k, std::size_t n) {
  check_matmul(a, b, out, m, k, n);
  for (std::size_t i = 0; i < m; ++i) matmul_row(a.data() + i * k, b.data(), out.data() + i * n, k, n);
}

void log_mean_exp_rows(std::span<const double> x, std::size_t rows, std::size_t cols,
                       std::span<double> out) {
  check_rows(x, rows, cols, out);
  const auto r = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < r; ++i) out[i] = log_mean_exp(x.data() + i * cols, cols);
}

void log_mean_exp_rows_serial(std::span<const double> x, std::size_t rows, std::size_t cols,
                              std::span<double> out) {
  check_rows(x, rows, cols, out);
  for (std::size_t i = 0; i < rows; ++i) out[i] = log_mean_exp(x.data() + i * cols, cols);
}

DrawSummary summarize_draws(std::size_t n, const Draw& draw) {
  std::vector<std::vector<double>> draws(n);
  std::exception_ptr failure;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      draws[i] = draw(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return reduce(draws);
}

DrawSummary summarize_draws_serial(std::size_t n, const Draw& draw) {
  std::vector<std::vector<double>> draws(n);
  for (std::size_t i = 0; i < n; ++i) draws[i] = draw(i);
  return reduce(draws);
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace rws::parallel
