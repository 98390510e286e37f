#include "rws/optim/adam.hpp"

#include <cmath>
#include <string>

#include "rws/error.hpp"

namespace rws::optim {

Adam::Adam(const Params& like, AdamConfig config) : config_(config) {
  for (const auto& p : like) {
    m_.emplace_back(p.shape(), 0.0);
    v_.emplace_back(p.shape(), 0.0);
  }
}

void Adam::step(Params& params, const Params& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ShapeError("adam: parameter group size mismatch");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (params[i].shape() != m_[i].shape() || grads[i].shape() != m_[i].shape()) {
      throw ShapeError("adam: shape mismatch in tensor " + std::to_string(i));
    }
    if (!grads[i].all_finite()) {
      throw NonFiniteError("adam: non-finite gradient in tensor " + std::to_string(i));
    }
  }
  ++t_;
  const auto& c = config_;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto p = params[i].values();
    auto m = m_[i].values();
    auto v = v_[i].values();
    auto g = grads[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      p[j] -= c.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + c.eps);
    }
  }
}

}  // namespace rws::optim
