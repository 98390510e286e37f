#pragma once

#include <functional>

#include "rws/ad/tape.hpp"

namespace rws::ad {

// Scalar function of one parameter tensor, evaluated on a fresh tape. It must
// be deterministic: callers freeze any randomness before handing it over.
using ScalarFn = std::function<Var(Tape&, Var params)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  Tensor analytic;
  Tensor numeric;
};

// Compares the reverse-mode gradient against central differences. The error
// per coordinate is |analytic - numeric| / (|numeric| + 1e-8).
GradCheckResult finite_difference_check(const ScalarFn& f, const Tensor& params,
                                        double step = 1e-5);

}  // namespace rws::ad
