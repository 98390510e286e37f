#include "rws/ad/nn.hpp"

#include <cmath>

#include "rws/error.hpp"

namespace rws::ad {

std::vector<Var> bind_params(Tape& tape, const Params& params, bool requires_grad) {
  std::vector<Var> out;
  out.reserve(params.size());
  for (const Tensor& p : params) out.push_back(tape.leaf(p, requires_grad));
  return out;
}

Params collect(const Gradients& grads, std::span<const Var> leaves) {
  Params out;
  out.reserve(leaves.size());
  for (const Var& v : leaves) out.push_back(grads[v]);
  return out;
}

Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

Mlp Mlp::make(std::vector<std::size_t> sizes, Rng& rng) {
  if (sizes.size() < 2) throw ShapeError("an MLP needs at least input and output sizes");
  Mlp m;
  m.sizes = std::move(sizes);
  for (std::size_t l = 0; l + 1 < m.sizes.size(); ++l) {
    m.params.push_back(uniform_init({m.sizes[l], m.sizes[l + 1]}, m.sizes[l], rng));
    m.params.push_back(uniform_init({m.sizes[l + 1]}, m.sizes[l], rng));
  }
  return m;
}

Var Mlp::forward(std::span<const Var> bound, Var x) const {
  const std::size_t layers = sizes.size() - 1;
  if (bound.size() != 2 * layers) throw ShapeError("MLP given the wrong number of parameters");
  Var h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    h = affine(h, bound[2 * l], bound[2 * l + 1]);
    if (l + 1 < layers) h = tanh(h);
  }
  return h;
}

std::size_t Mlp::num_params() const {
  std::size_t n = 0;
  for (const Tensor& p : params) n += p.size();
  return n;
}

}  // namespace rws::ad
