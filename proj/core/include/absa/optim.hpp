#pragma once

#include <cstdint>
#include <vector>

#include "absa/tensor.hpp"

namespace absa {

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  double lr = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected Adam update of `params` from `grads` (one buffer per
/// parameter). Moment buffers are sized on first use.
void adam_step(std::vector<Tensor>& params, const std::vector<std::vector<double>>& grads,
               AdamState& state);

/// Adam over a fixed parameter list, reading each parameter's own grad.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8);

  void step();
  void zero_grad();

  const AdamState& state() const { return state_; }
  AdamState& state() { return state_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamState state_;
};

}  // namespace absa
