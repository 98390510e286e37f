#pragma once

#include <span>
#include <vector>

#include "rws/ad/ops.hpp"
#include "rws/rng.hpp"

namespace rws::ad {

using Params = std::vector<Tensor>;

// Puts every parameter tensor on the tape as a leaf.
std::vector<Var> bind_params(Tape& tape, const Params& params, bool requires_grad = true);
Params collect(const Gradients& grads, std::span<const Var> leaves);

// Weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng);

// Fully connected tanh network. Layer l has weight params[2l] of shape
// [in, out] and bias params[2l+1] of shape [out]; no nonlinearity after the
// last layer.
struct Mlp {
  std::vector<std::size_t> sizes;
  Params params;

  static Mlp make(std::vector<std::size_t> sizes, Rng& rng);
  Var forward(std::span<const Var> bound, Var x) const;
  std::size_t num_params() const;
};

}  // namespace rws::ad
