#include "sicl/model.hpp"

#include <cmath>

#include "sicl/errors.hpp"
#include "sicl/ops.hpp"
#include "sicl/rng.hpp"

namespace sicl {
namespace {

Tensor uniform(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(rng);
  return t;
}

constexpr std::size_t kConv1 = 32, kConv2 = 32, kConv3 = 64;

}  // namespace

EncoderParams EncoderParams::init(std::size_t in_channels, std::uint64_t seed) {
  if (in_channels == 0) throw ContractError("encoder needs at least one input channel");
  Rng rng(derive_seed(seed, "encoder-init"));
  EncoderParams p;
  p.in_channels = in_channels;
  const double a1 = std::sqrt(1.0 / static_cast<double>(in_channels * kKernel));
  const double a2 = std::sqrt(1.0 / static_cast<double>(kConv1 * kKernel));
  const double a3 = std::sqrt(1.0 / static_cast<double>(kConv2 * kKernel));
  const double a4 = std::sqrt(1.0 / static_cast<double>(kReprDim));
  p.conv1_w = uniform({kConv1, in_channels, kKernel}, a1, rng);
  p.conv1_b = uniform({kConv1}, a1, rng);
  p.conv2_w = uniform({kConv2, kConv1, kKernel}, a2, rng);
  p.conv2_b = uniform({kConv2}, a2, rng);
  p.conv3_w = uniform({kConv3, kConv2, kKernel}, a3, rng);
  p.conv3_b = uniform({kConv3}, a3, rng);
  p.proj1_w = uniform({kReprDim, kReprDim}, a4, rng);
  p.proj1_b = uniform({kReprDim}, a4, rng);
  p.proj2_w = uniform({kReprDim, kEmbeddingDim}, a4, rng);
  p.proj2_b = uniform({kEmbeddingDim}, a4, rng);
  return p;
}

EncoderParams EncoderParams::zeros(std::size_t in_channels) {
  EncoderParams p = init(in_channels, 0);
  for (auto& [name, t] : p.named()) *t = Tensor(t->shape());
  return p;
}

std::vector<std::pair<std::string, Tensor*>> EncoderParams::named() {
  return {{"conv1.weight", &conv1_w}, {"conv1.bias", &conv1_b}, {"conv2.weight", &conv2_w},
          {"conv2.bias", &conv2_b},   {"conv3.weight", &conv3_w}, {"conv3.bias", &conv3_b},
          {"proj1.weight", &proj1_w}, {"proj1.bias", &proj1_b}, {"proj2.weight", &proj2_w},
          {"proj2.bias", &proj2_b}};
}

std::vector<std::pair<std::string, const Tensor*>> EncoderParams::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<EncoderParams*>(this)->named()) out.emplace_back(name, t);
  return out;
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += t->size();
  return n;
}

LinearHead LinearHead::init(std::size_t num_classes, std::size_t in_dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "head-init"));
  const double a = std::sqrt(1.0 / static_cast<double>(in_dim));
  LinearHead head;
  head.weight = uniform({num_classes, in_dim}, a, rng);
  head.bias = uniform({num_classes}, a, rng);
  return head;
}

LinearHead LinearHead::zeros(std::size_t num_classes, std::size_t in_dim) {
  return LinearHead{Tensor({num_classes, in_dim}), Tensor({num_classes})};
}

Tensor stack_windows(std::span<const SensorWindow* const> windows) {
  if (windows.empty()) throw ContractError("stack_windows: no windows");
  const Shape shape = windows.front()->values.shape();
  const std::size_t per = windows.front()->values.size();
  Tensor x({windows.size(), shape.at(0), shape.at(1)});
  for (std::size_t b = 0; b < windows.size(); ++b) {
    if (windows[b]->values.shape() != shape) throw ShapeError("stack_windows: mixed window shapes");
    std::copy(windows[b]->values.data().begin(), windows[b]->values.data().end(), x.raw() + b * per);
  }
  return x;
}

Tensor stack_windows(const std::vector<SensorWindow>& windows) {
  std::vector<const SensorWindow*> ptrs;
  for (const auto& w : windows) ptrs.push_back(&w);
  return stack_windows(ptrs);
}

EncoderVars EncoderVars::track(Tape& tape, const EncoderParams& p) {
  EncoderVars v;
  for (const auto& [name, t] : p.named()) v.params.push_back(tape.leaf(*t));
  return v;
}

EncoderVars EncoderVars::freeze(Tape& tape, const EncoderParams& p) {
  EncoderVars v;
  for (const auto& [name, t] : p.named()) v.params.push_back(tape.constant(*t));
  return v;
}

std::vector<Tensor> EncoderVars::grads(const Tape& tape) const {
  std::vector<Tensor> out;
  for (Var v : params) {
    auto g = tape.grad(v);
    out.push_back(g ? std::move(*g) : Tensor(v.value().shape()));
  }
  return out;
}

EncodedVars encode(const EncoderVars& vars, Var x) {
  const auto& p = vars.params;
  const std::size_t channel_axis = x.value().rank() == 3 ? 1 : 0;
  if (x.value().dim(channel_axis) != p[0].value().dim(1)) {
    throw ShapeError("encoder expects " + std::to_string(p[0].value().dim(1)) + " channels, window has " +
                     std::to_string(x.value().dim(channel_axis)));
  }
  Var a = ad::relu(ad::add_bias(ad::conv1d(x, p[0]), p[1], channel_axis));
  a = ad::relu(ad::add_bias(ad::conv1d(a, p[2]), p[3], channel_axis));
  a = ad::relu(ad::add_bias(ad::conv1d(a, p[4]), p[5], channel_axis));
  Var h = ad::global_avg_pool(a);

  const bool single = h.value().rank() == 1;
  Var rows = single ? ad::reshape(h, {1, h.value().size()}) : h;
  Var u = ad::relu(ad::add_bias(ad::matmul(rows, p[6]), p[7], 1));
  Var z = ad::l2_normalize(ad::add_bias(ad::matmul(u, p[8]), p[9], 1), 1);
  if (single) z = ad::reshape(z, {z.value().size()});
  return {h, z};
}

Encoding encode_batch(const EncoderParams& params, const Tensor& x) {
  Tape tape;
  const EncodedVars out = encode(EncoderVars::freeze(tape, params), tape.constant(x));
  return {out.h.value(), out.z.value()};
}

Encoding encode(const EncoderParams& params, const SensorWindow& window) {
  return encode_batch(params, window.values);
}

HeadVars HeadVars::track(Tape& tape, const LinearHead& head) {
  return {tape.leaf(head.weight), tape.leaf(head.bias)};
}

Var classify(const HeadVars& head, Var h) {
  return ad::add_bias(ad::matmul(h, ad::transpose(head.weight)), head.bias, 1);
}

Tensor classify(const LinearHead& head, const Tensor& h) {
  if (h.rank() == 1) {
    if (h.size() != head.weight.dim(1)) throw ShapeError("classify: head/representation mismatch");
    return ops::add_bias(ops::matmul(head.weight, h.reshaped({h.size(), 1})).reshaped({head.num_classes()}),
                         head.bias, 0);
  }
  if (h.rank() != 2 || h.dim(1) != head.weight.dim(1)) {
    throw ShapeError("classify: head/representation mismatch");
  }
  return ops::add_bias(ops::matmul(h, ops::transpose(head.weight)), head.bias, 1);
}

}  // namespace sicl
