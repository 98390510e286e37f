#include "rws/ad/gradcheck.hpp"

#include <cmath>

#include "rws/error.hpp"

namespace rws::ad {
namespace {

double evaluate(const ScalarFn& f, const Tensor& params) {
  Tape tape;
  Var p = tape.constant(params);
  const double v = f(tape, p).item();
  if (!std::isfinite(v)) throw NonFiniteError("finite-difference evaluation is not finite");
  return v;
}

}  // namespace

GradCheckResult finite_difference_check(const ScalarFn& f, const Tensor& params, double step) {
  GradCheckResult res;
  {
    Tape tape;
    Var p = tape.leaf(params);
    res.analytic = tape.backward(f(tape, p))[p];
  }
  res.numeric = Tensor(params.shape());
  Tensor probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    probe[i] = params[i] + step;
    const double up = evaluate(f, probe);
    probe[i] = params[i] - step;
    const double down = evaluate(f, probe);
    probe[i] = params[i];
    res.numeric[i] = (up - down) / (2.0 * step);
    const double err =
        std::abs(res.analytic[i] - res.numeric[i]) / (std::abs(res.numeric[i]) + 1e-8);
    res.max_rel_error = std::max(res.max_rel_error, err);
  }
  return res;
}

}  // namespace rws::ad
