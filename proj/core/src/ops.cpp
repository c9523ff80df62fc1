#include "sicl/ops.hpp"

#include <algorithm>
#include <cstring>
#include <vector>
#include <cmath>
#include <limits>
#include <utility>

#include "kernels.hpp"
#include "sicl/errors.hpp"

namespace sicl::kernels {

namespace {

// Register-blocked stride-1 kernels: 4 output rows x 8 time steps per tile.
using v8 = double __attribute__((vector_size(64)));
constexpr std::size_t kLanes = 8;
constexpr std::size_t kRows = 4;
constexpr std::size_t kMaxTiledKernel = 8;

inline v8 load8(const double* p) {
  v8 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}
inline void store8(double* p, v8 v) { std::memcpy(p, &v, sizeof v); }
inline double hsum(v8 v) {
  double s = 0.0;
  for (std::size_t i = 0; i < kLanes; ++i) s += v[i];
  return s;
}

// y[o][t] += sum_{c,k} w[o][c][k] x[c][t + k] for one sample.
template <std::size_t Rows>
std::size_t correlate_tiles(std::size_t o, std::size_t C, std::size_t T, std::size_t O, std::size_t K,
                            std::size_t To, const double* x, const double* w, double* y) {
  const std::size_t wstep = C * K;
  for (; o + Rows <= O; o += Rows) {
    std::size_t t = 0;
    for (; t + kLanes <= To; t += kLanes) {
      v8 acc[Rows];
      for (std::size_t j = 0; j < Rows; ++j) acc[j] = load8(y + (o + j) * To + t);
      for (std::size_t c = 0; c < C; ++c) {
        const double* xs = x + c * T + t;
        const double* wr = w + (o * C + c) * K;
        for (std::size_t k = 0; k < K; ++k) {
          const v8 xv = load8(xs + k);
          for (std::size_t j = 0; j < Rows; ++j) acc[j] += xv * wr[j * wstep + k];
        }
      }
      for (std::size_t j = 0; j < Rows; ++j) store8(y + (o + j) * To + t, acc[j]);
    }
    for (; t < To; ++t)
      for (std::size_t j = 0; j < Rows; ++j) {
        double a = 0.0;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t k = 0; k < K; ++k) a += w[((o + j) * C + c) * K + k] * x[c * T + t + k];
        y[(o + j) * To + t] += a;
      }
  }
  return o;
}

void correlate(std::size_t C, std::size_t T, std::size_t O, std::size_t K, std::size_t To, const double* x,
               const double* w, double* y) {
  std::size_t o = correlate_tiles<8>(0, C, T, O, K, To, x, w, y);
  o = correlate_tiles<1>(o, C, T, O, K, To, x, w, y);
}

// dw[o][c][k] += sum_t dy[o][t] x[c][t + k] for one sample. K is a template
// parameter so the kRows x K accumulators stay in registers.
template <std::size_t K>
void weight_grad_fixed(std::size_t C, std::size_t T, std::size_t O, std::size_t To, const double* x,
                       const double* dy, double* dw) {
  std::size_t o = 0;
  for (; o + kRows <= O; o += kRows) {
    for (std::size_t c = 0; c < C; ++c) {
      v8 acc[kRows][K] = {};
      const double* xs = x + c * T;
      std::size_t t = 0;
      for (; t + kLanes <= To; t += kLanes) {
        v8 d[kRows];
        for (std::size_t j = 0; j < kRows; ++j) d[j] = load8(dy + (o + j) * To + t);
        for (std::size_t k = 0; k < K; ++k) {
          const v8 xv = load8(xs + t + k);
          for (std::size_t j = 0; j < kRows; ++j) acc[j][k] += d[j] * xv;
        }
      }
      for (std::size_t j = 0; j < kRows; ++j)
        for (std::size_t k = 0; k < K; ++k) {
          double a = hsum(acc[j][k]);
          for (std::size_t r = t; r < To; ++r) a += dy[(o + j) * To + r] * xs[r + k];
          dw[((o + j) * C + c) * K + k] += a;
        }
    }
  }
  for (; o < O; ++o)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < K; ++k) {
        double a = 0.0;
        for (std::size_t t = 0; t < To; ++t) a += dy[o * To + t] * x[c * T + t + k];
        dw[(o * C + c) * K + k] += a;
      }
}

template <std::size_t... Ks>
void weight_grad_dispatch(std::index_sequence<Ks...>, std::size_t C, std::size_t T, std::size_t O, std::size_t K,
                          std::size_t To, const double* x, const double* dy, double* dw) {
  ((K == Ks + 1 ? weight_grad_fixed<Ks + 1>(C, T, O, To, x, dy, dw) : void()), ...);
}

// K <= kMaxTiledKernel.
void weight_grad(std::size_t C, std::size_t T, std::size_t O, std::size_t K, std::size_t To, const double* x,
                 const double* dy, double* dw) {
  weight_grad_dispatch(std::make_index_sequence<kMaxTiledKernel>{}, C, T, O, K, To, x, dy, dw);
}

void conv1d_forward_naive(const ConvDims& d, const double* x, const double* w, double* y) {
  const std::size_t T = d.steps, To = d.out_steps, K = d.kernel, S = d.stride;
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t o = 0; o < d.out_channels; ++o) {
      double* yrow = y + (b * d.out_channels + o) * To;
      for (std::size_t c = 0; c < d.in_channels; ++c) {
        const double* xrow = x + (b * d.in_channels + c) * T;
        const double* wk = w + (o * d.in_channels + c) * K;
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t t = 0; t < To; ++t) yrow[t] += wk[k] * xrow[t * S + k];
      }
    }
}

void conv1d_backward_naive(const ConvDims& d, const double* x, const double* w, const double* dy,
                           double* dx, double* dw) {
  const std::size_t T = d.steps, To = d.out_steps, K = d.kernel, S = d.stride;
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t o = 0; o < d.out_channels; ++o) {
      const double* dyrow = dy + (b * d.out_channels + o) * To;
      for (std::size_t c = 0; c < d.in_channels; ++c) {
        const double* xrow = x + (b * d.in_channels + c) * T;
        const std::size_t wbase = (o * d.in_channels + c) * K;
        for (std::size_t k = 0; k < K; ++k) {
          if (dx) {
            double* dxrow = dx + (b * d.in_channels + c) * T;
            for (std::size_t t = 0; t < To; ++t) dxrow[t * S + k] += w[wbase + k] * dyrow[t];
          }
          if (dw) {
            double acc = 0.0;
            for (std::size_t t = 0; t < To; ++t) acc += dyrow[t] * xrow[t * S + k];
            dw[wbase + k] += acc;
          }
        }
      }
    }
}

}  // namespace

void conv1d_forward(const ConvDims& d, const double* x, const double* w, double* y) {
  if (d.stride != 1) return conv1d_forward_naive(d, x, w, y);
  for (std::size_t b = 0; b < d.batch; ++b) {
    correlate(d.in_channels, d.steps, d.out_channels, d.kernel, d.out_steps, x + b * d.in_channels * d.steps, w,
              y + b * d.out_channels * d.out_steps);
  }
}

void conv1d_backward(const ConvDims& d, const double* x, const double* w, const double* dy,
                     double* dx, double* dw) {
  if (d.stride != 1 || d.kernel > kMaxTiledKernel) return conv1d_backward_naive(d, x, w, dy, dx, dw);
  const std::size_t C = d.in_channels, O = d.out_channels, K = d.kernel, T = d.steps, To = d.out_steps;
  // dx is a full correlation of dy with the flipped, transposed kernel.
  std::vector<double> flipped, padded;
  const std::size_t Tp = To + 2 * (K - 1);
  if (dx) {
    flipped.resize(C * O * K);
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t k = 0; k < K; ++k) flipped[(c * O + o) * K + (K - 1 - k)] = w[(o * C + c) * K + k];
    padded.assign(O * Tp, 0.0);
  }
  for (std::size_t b = 0; b < d.batch; ++b) {
    const double* xb = x + b * C * T;
    const double* dyb = dy + b * O * To;
    if (dw) weight_grad(C, T, O, K, To, xb, dyb, dw);
    if (dx) {
      for (std::size_t o = 0; o < O; ++o) std::copy_n(dyb + o * To, To, padded.data() + o * Tp + (K - 1));
      correlate(O, Tp, C, K, T, padded.data(), flipped.data(), dx + b * C * T);
    }
  }
}

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    for (std::size_t j = 0; j < k; ++j) {
      const double* brow = b + j * n;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t p = 0; p < n; ++p) acc += arow[p] * brow[p];
      c[i * k + j] += acc;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      double* crow = c + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

Lanes lanes_of(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape));
  }
  Lanes l{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) l.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) l.inner *= shape[i];
  return l;
}

}  // namespace sicl::kernels

namespace sicl::ops {
using kernels::lanes_of;
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return zip(a, b, "mul", [](double x, double y) { return x * y; });
}
Tensor scale(const Tensor& a, double factor) {
  return map(a, [factor](double x) { return x * factor; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias, std::size_t axis) {
  const auto l = lanes_of(x.shape(), axis);
  if (bias.rank() != 1 || bias.size() != l.extent) {
    throw ShapeError("add_bias: bias " + shape_string(bias.shape()) + " for axis " +
                     std::to_string(axis) + " of " + shape_string(x.shape()));
  }
  Tensor out = x;
  double* p = out.raw();
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t k = 0; k < l.extent; ++k) {
      double* lane = p + (o * l.extent + k) * l.inner;
      const double bv = bias[k];
      for (std::size_t i = 0; i < l.inner; ++i) lane[i] += bv;
    }
  return out;
}

Tensor relu(const Tensor& x) {
  return map(x, [](double v) { return v > 0.0 ? v : 0.0; });
}
Tensor exp(const Tensor& x) {
  return map(x, [](double v) { return std::exp(v); });
}
Tensor log(const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value");
  }
  return map(x, [](double v) { return std::log(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  kernels::gemm_nn(m, k, n, a.raw(), b.raw(), c.raw());
  return c;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose expects rank 2, got " + shape_string(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
  return t;
}

Tensor conv1d(const Tensor& x, const Tensor& w, std::size_t stride) {
  const bool batched = x.rank() == 3;
  if ((x.rank() != 2 && !batched) || w.rank() != 3) {
    throw ShapeError("conv1d: input " + shape_string(x.shape()) + ", kernel " +
                     shape_string(w.shape()));
  }
  if (stride == 0) throw ContractError("conv1d: stride must be >= 1");
  const std::size_t B = batched ? x.dim(0) : 1;
  const std::size_t C = x.dim(batched ? 1 : 0), T = x.dim(batched ? 2 : 1);
  if (w.dim(1) != C) {
    throw ShapeError("conv1d: kernel expects " + std::to_string(w.dim(1)) +
                     " input channels, input has " + std::to_string(C));
  }
  const std::size_t K = w.dim(2);
  if (K > T || K == 0) {
    throw ShapeError("conv1d: kernel length " + std::to_string(K) + " exceeds input length " +
                     std::to_string(T));
  }
  const kernels::ConvDims d{B, C, T, w.dim(0), K, stride, (T - K) / stride + 1};
  Tensor y(batched ? Shape{B, d.out_channels, d.out_steps} : Shape{d.out_channels, d.out_steps});
  kernels::conv1d_forward(d, x.raw(), w.raw(), y.raw());
  return y;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto l = lanes_of(x.shape(), axis);
  Tensor out(x.shape());
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t base = o * l.extent * l.inner + i;
      double hi = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < l.extent; ++k) hi = std::max(hi, x[base + k * l.inner]);
      double total = 0.0;
      for (std::size_t k = 0; k < l.extent; ++k) {
        const double e = std::exp(x[base + k * l.inner] - hi);
        out[base + k * l.inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < l.extent; ++k) out[base + k * l.inner] /= total;
    }
  return out;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return Tensor::scalar(s);
}

Tensor sum(const Tensor& x, std::size_t axis) {
  const auto l = lanes_of(x.shape(), axis);
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(shape);
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t k = 0; k < l.extent; ++k)
      for (std::size_t i = 0; i < l.inner; ++i)
        out[o * l.inner + i] += x[(o * l.extent + k) * l.inner + i];
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.empty()) throw ContractError("mean of empty tensor");
  return Tensor::scalar(sum(x).item() / static_cast<double>(x.size()));
}

Tensor l2_normalize(const Tensor& x, std::size_t axis) {
  const auto l = lanes_of(x.shape(), axis);
  Tensor out(x.shape());
  for (std::size_t o = 0; o < l.outer; ++o)
    for (std::size_t i = 0; i < l.inner; ++i) {
      const std::size_t base = o * l.extent * l.inner + i;
      double sq = 0.0;
      for (std::size_t k = 0; k < l.extent; ++k) sq += x[base + k * l.inner] * x[base + k * l.inner];
      if (sq == 0.0) throw DomainError("l2_normalize: zero vector");
      const double inv = 1.0 / std::sqrt(sq);
      for (std::size_t k = 0; k < l.extent; ++k) out[base + k * l.inner] = x[base + k * l.inner] * inv;
    }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 2 && x.rank() != 3) {
    throw ShapeError("global_avg_pool expects rank 2 or 3, got " + shape_string(x.shape()));
  }
  const std::size_t T = x.shape().back();
  return scale(sum(x, x.rank() - 1), 1.0 / static_cast<double>(T));
}

double cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("cross_entropy: logits " + shape_string(logits.shape()) + " for " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  double total = 0.0;
  for (std::size_t r = 0; r < B; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= K) throw ContractError("cross_entropy: label out of range");
    const double* row = logits.raw() + r * K;
    const double hi = *std::max_element(row, row + K);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(row[k] - hi);
    total += hi + std::log(z) - row[y];
  }
  return total / static_cast<double>(B);
}

}  // namespace sicl::ops
