#pragma once

#include <span>
#include <vector>

#include "sicl/tensor.hpp"

namespace sicl {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Moment buffers are created on the first step and
/// bound to the parameter order used there.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void step(std::span<Tensor* const> params, std::span<const Tensor> grads);
  long steps_taken() const noexcept { return t_; }

 private:
  AdamOptions options_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

}  // namespace sicl
