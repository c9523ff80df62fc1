#pragma once

#include "sicl/tensor.hpp"

// Pure tensor kernels. Every function here is a value-in value-out map; the
// autodiff layer records these and supplies their adjoints.
namespace sicl::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// Adds `bias` (rank 1, length x.dim(axis)) broadcast along `axis` of x.
Tensor add_bias(const Tensor& x, const Tensor& bias, std::size_t axis);

Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Valid cross-correlation. x is [C_in x T] or [B x C_in x T]; w is [C_out x C_in x K].
Tensor conv1d(const Tensor& x, const Tensor& w, std::size_t stride = 1);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x);

/// Divides every lane along `axis` by its L2 norm. A zero lane is a DomainError.
Tensor l2_normalize(const Tensor& x, std::size_t axis);

/// Mean over the last (time) axis: [C x T] -> [C], [B x C x T] -> [B x C].
Tensor global_avg_pool(const Tensor& x);

/// Row-wise softmax cross-entropy averaged over rows. logits is [B x K].
double cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace sicl::ops
