#pragma once

#include <cstddef>

#include "rws/ad/nn.hpp"

namespace rws::optim {

using ad::Params;

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. One instance per parameter group.
class Adam {
 public:
  explicit Adam(const Params& like, AdamConfig config = {});

  // Throws NonFiniteError (parameters untouched) on a non-finite gradient.
  void step(Params& params, const Params& grads);

  std::size_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  Params m_, v_;
  std::size_t t_ = 0;
};

}  // namespace rws::optim
