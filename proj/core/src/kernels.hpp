#pragma once

// Raw loops shared by the pure ops and their adjoints.

#include <cstddef>

#include "sicl/tensor.hpp"

namespace sicl::kernels {

struct ConvDims {
  std::size_t batch, in_channels, steps, out_channels, kernel, stride, out_steps;
};

void conv1d_forward(const ConvDims& d, const double* x, const double* w, double* y);
/// Accumulates into dx and dw; either may be null.
void conv1d_backward(const ConvDims& d, const double* x, const double* w, const double* dy,
                     double* dx, double* dw);

/// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c);
/// c[m x k] += a[m x n] * b[k x n]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c);
/// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c);

/// Splits a shape around `axis` into (outer, extent, inner) strides.
struct Lanes {
  std::size_t outer, extent, inner;
};
Lanes lanes_of(const Shape& shape, std::size_t axis);

}  // namespace sicl::kernels
