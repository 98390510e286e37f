#include "rws/ad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rws/error.hpp"

namespace rws::ad {
namespace {

Shape drop_last(const Shape& s) {
  if (s.empty()) return {};
  return Shape(s.begin(), s.end() - 1);
}

void require_same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) {
    throw RecordError(std::string("op '") + op + "' mixes inputs from different tapes");
  }
}

template <class F, class DA, class DB>
Var binary(Var a, Var b, const char* op, F f, DA da, DB db) {
  require_same_tape(a, b, op);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t na = av.size();
  const std::size_t nb = bv.size();
  Shape shape;
  if (av.shape() == bv.shape() || (na == 1 && nb == 1)) {
    shape = av.shape();
  } else if (na == 1) {
    shape = bv.shape();
  } else if (nb == 1) {
    shape = av.shape();
  } else {
    throw ShapeError(std::string(op) + ": shapes " + to_string(av.shape()) + " and " +
                     to_string(bv.shape()) + " do not conform");
  }
  Tensor out(shape);
  const std::size_t n = out.size();
  const std::size_t sa = na == 1 ? 0 : 1;
  const std::size_t sb = nb == 1 ? 0 : 1;
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i * sa], bv[i * sb]);

  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape().record(
      std::move(out), {a, b},
      [=](Tape& t, std::size_t, std::span<const double> g) {
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(ib);
        double* ga = t.grad_buffer(ia);
        double* gb = t.grad_buffer(ib);
        for (std::size_t i = 0; i < n; ++i) {
          const double xv = x[i * sa];
          const double yv = y[i * sb];
          if (ga) ga[i * sa] += g[i] * da(xv, yv);
          if (gb) gb[i * sb] += g[i] * db(xv, yv);
        }
      },
      op);
}

// dfdx receives the input and output value of each element.
template <class F, class D>
Var unary(Var a, const char* op, F f, D dfdx) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  const std::size_t n = av.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i]);
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(out), {a},
      [=](Tape& t, std::size_t self, std::span<const double> g) {
        double* ga = t.grad_buffer(ia);
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(self);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * dfdx(x[i], y[i]);
      },
      op);
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Var neg(Var a) {
  return unary(a, "neg", [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var scale(Var a, double c) {
  return unary(a, "scale", [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var shift(Var a, double c) {
  return unary(a, "shift", [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var exp(Var a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var tanh(Var a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var square(Var a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sum(Var a) {
  const Tensor& av = a.value();
  double s = 0.0;
  for (double v : av.values()) s += v;
  const std::size_t ia = a.id();
  const std::size_t n = av.size();
  return a.tape().record(
      Tensor::scalar(s), {a},
      [=](Tape& t, std::size_t, std::span<const double> g) {
        double* ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[0];
      },
      "sum");
}

Var mean(Var a) {
  const std::size_t n = a.size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sum_last(Var a) {
  const Tensor& av = a.value();
  const std::size_t rows = av.rows();
  const std::size_t cols = av.cols();
  Tensor out(drop_last(av.shape()));
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += av[r * cols + c];
    out[r] = s;
  }
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(out), {a},
      [=](Tape& t, std::size_t, std::span<const double> g) {
        double* ga = t.grad_buffer(ia);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[r];
      },
      "sum_last");
}

Var mean_last(Var a) {
  const std::size_t cols = a.value().cols();
  if (cols == 0) throw ShapeError("mean_last over an empty axis");
  return scale(sum_last(a), 1.0 / static_cast<double>(cols));
}

Var softmax(Var a) {
  const Tensor& av = a.value();
  const std::size_t rows = av.rows();
  const std::size_t cols = av.cols();
  Tensor out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &av[r * cols];
    double* y = &out[r * cols];
    const double m = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (y[c] = std::exp(x[c] - m));
    for (std::size_t c = 0; c < cols; ++c) y[c] /= z;
  }
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(out), {a},
      [=](Tape& t, std::size_t self, std::span<const double> g) {
        double* ga = t.grad_buffer(ia);
        const Tensor& y = t.value(self);
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c)
            ga[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
        }
      },
      "softmax");
}

Var log_softmax(Var a) {
  const Tensor& av = a.value();
  const std::size_t rows = av.rows();
  const std::size_t cols = av.cols();
  Tensor out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &av[r * cols];
    const double m = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(x[c] - m);
    const double lse = m + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[c] - lse;
  }
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(out), {a},
      [=](Tape& t, std::size_t self, std::span<const double> g) {
        double* ga = t.grad_buffer(ia);
        const Tensor& y = t.value(self);
        for (std::size_t r = 0; r < rows; ++r) {
          double gs = 0.0;
          for (std::size_t c = 0; c < cols; ++c) gs += g[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c)
            ga[r * cols + c] += g[r * cols + c] - std::exp(y[r * cols + c]) * gs;
        }
      },
      "log_softmax");
}

Var logsumexp(Var a) {
  const Tensor& av = a.value();
  const std::size_t rows = av.rows();
  const std::size_t cols = av.cols();
  Tensor out(drop_last(av.shape()));
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &av[r * cols];
    const double m = *std::max_element(x, x + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(x[c] - m);
    out[r] = m + std::log(z);
  }
  const std::size_t ia = a.id();
  return a.tape().record(
      std::move(out), {a},
      [=](Tape& t, std::size_t self, std::span<const double> g) {
        double* ga = t.grad_buffer(ia);
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(self);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c)
            ga[r * cols + c] += g[r] * std::exp(x[r * cols + c] - y[r]);
      },
      "logsumexp");
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0]) {
    throw ShapeError("matmul: shapes " + to_string(av.shape()) + " and " +
                     to_string(bv.shape()) + " do not conform");
  }
  const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(
      std::move(out), {a, b},
      [=](Tape& t, std::size_t, std::span<const double> g) {
        const Tensor& x = t.value(ia);
        const Tensor& y = t.value(ib);
        if (double* ga = t.grad_buffer(ia)) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * y[p * n + j];
              ga[i * k + p] += s;
            }
        }
        if (double* gb = t.grad_buffer(ib)) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double xip = x[i * k + p];
              if (xip == 0.0) continue;
              for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += xip * g[i * n + j];
            }
        }
      },
      "matmul");
}

Var affine(Var x, Var w, Var b) {
  require_same_tape(x, w, "affine");
  require_same_tape(x, b, "affine");
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (xv.rank() != 2 || wv.rank() != 2 || xv.shape()[1] != wv.shape()[0] ||
      bv.size() != wv.shape()[1]) {
    throw ShapeError("affine: shapes " + to_string(xv.shape()) + ", " + to_string(wv.shape()) +
                     ", " + to_string(bv.shape()) + " do not conform");
  }
  const std::size_t m = xv.shape()[0], k = xv.shape()[1], n = wv.shape()[1];
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* o = &out[i * n];
    for (std::size_t j = 0; j < n; ++j) o[j] = bv[j];
    for (std::size_t p = 0; p < k; ++p) {
      const double xip = xv[i * k + p];
      if (xip == 0.0) continue;
      const double* wr = &wv[p * n];
      for (std::size_t j = 0; j < n; ++j) o[j] += xip * wr[j];
    }
  }
  const std::size_t ix = x.id(), iw = w.id(), ibias = b.id();
  return x.tape().record(
      std::move(out), {x, w, b},
      [=](Tape& t, std::size_t, std::span<const double> g) {
        const Tensor& xv2 = t.value(ix);
        const Tensor& wv2 = t.value(iw);
        if (double* gx = t.grad_buffer(ix)) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              const double* wr = &wv2[p * n];
              const double* gr = &g[i * n];
              for (std::size_t j = 0; j < n; ++j) s += gr[j] * wr[j];
              gx[i * k + p] += s;
            }
        }
        if (double* gw = t.grad_buffer(iw)) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double xip = xv2[i * k + p];
              if (xip == 0.0) continue;
              double* gwr = &gw[p * n];
              const double* gr = &g[i * n];
              for (std::size_t j = 0; j < n; ++j) gwr[j] += xip * gr[j];
            }
        }
        if (double* gb = t.grad_buffer(ibias)) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
        }
      },
      "affine");
}

Var gather(Var a, std::span<const std::size_t> index) {
  const Tensor& av = a.value();
  const std::size_t rows = av.rows();
  const std::size_t cols = av.cols();
  if (index.size() != rows) {
    throw ShapeError("gather: " + std::to_string(index.size()) + " indices for " +
                     std::to_string(rows) + " rows");
  }
  Tensor out(drop_last(av.shape()));
  for (std::size_t r = 0; r < rows; ++r) {
    if (index[r] >= cols) {
      throw std::out_of_range("gather: index " + std::to_string(index[r]) +
                              " out of range for last axis of size " + std::to_string(cols));
    }
    out[r] = av[r * cols + index[r]];
  }
  const std::size_t ia = a.id();
  std::vector<std::size_t> idx(index.begin(), index.end());
  return a.tape().record(
      std::move(out), {a},
      [=, idx = std::move(idx)](Tape& t, std::size_t, std::span<const double> g) {
        double* ga = t.grad_buffer(ia);
        for (std::size_t r = 0; r < rows; ++r) ga[r * cols + idx[r]] += g[r];
      },
      "gather");
}

Var index_rows(Var a, std::span<const std::size_t> rows) {
  const Tensor& av = a.value();
  const std::size_t nrows = av.rows();
  const std::size_t cols = av.cols();
  Tensor out(Shape{rows.size(), cols});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= nrows) throw std::out_of_range("index_rows: row index out of range");
    std::copy_n(&av[rows[i] * cols], cols, &out[i * cols]);
  }
  const std::size_t ia = a.id();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return a.tape().record(
      std::move(out), {a},
      [=, idx = std::move(idx)](Tape& t, std::size_t, std::span<const double> g) {
        double* ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (std::size_t c = 0; c < cols; ++c) ga[idx[i] * cols + c] += g[i * cols + c];
      },
      "index_rows");
}

Var repeat_rows(Var a, std::size_t times) {
  const std::size_t rows = a.value().rows();
  std::vector<std::size_t> idx;
  idx.reserve(rows * times);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < times; ++k) idx.push_back(r);
  return index_rows(a, idx);
}

Var concat_last(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_last of no tensors");
  const std::size_t rows = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::vector<std::size_t> ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p, "concat_last");
    if (p.value().rows() != rows || p.value().rank() != parts[0].value().rank()) {
      throw ShapeError("concat_last: leading shapes differ");
    }
    widths.push_back(p.value().cols());
    ids.push_back(p.id());
    total += p.value().cols();
  }
  Shape shape = parts[0].value().shape();
  if (shape.empty()) shape = {1};
  shape.back() = total;
  Tensor out(shape);
  std::size_t off = 0;
  for (std::size_t j = 0; j < parts.size(); ++j) {
    const Tensor& pv = parts[j].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(&pv[r * widths[j]], widths[j], &out[r * total + off]);
    off += widths[j];
  }
  return parts[0].tape().record(
      std::move(out), parts,
      [=](Tape& t, std::size_t, std::span<const double> g) {
        std::size_t o = 0;
        for (std::size_t j = 0; j < ids.size(); ++j) {
          if (double* gp = t.grad_buffer(ids[j])) {
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < widths[j]; ++c)
                gp[r * widths[j] + c] += g[r * total + o + c];
          }
          o += widths[j];
        }
      },
      "concat_last");
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  const std::size_t n = out.size();
  return a.tape().record(
      std::move(out), {a},
      [=](Tape& t, std::size_t, std::span<const double> g) {
        double* ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      },
      "reshape");
}

Var detach(Var a) { return a.tape().constant(a.value()); }

}  // namespace rws::ad
