#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sicl/autodiff.hpp"
#include "sicl/window.hpp"

namespace sicl {

inline constexpr std::size_t kKernel = 5;
inline constexpr std::size_t kReprDim = 64;       // h
inline constexpr std::size_t kEmbeddingDim = 32;  // z

/// Encoder f (three valid conv1d + ReLU, global average pool) and projector g
/// (linear 64->64, ReLU, linear 64->32, L2 normalize). Projector weights are
/// stored [in x out].
struct EncoderParams {
  std::size_t in_channels = 0;
  Tensor conv1_w, conv1_b;
  Tensor conv2_w, conv2_b;
  Tensor conv3_w, conv3_b;
  Tensor proj1_w, proj1_b;
  Tensor proj2_w, proj2_b;

  /// Uniform(-a, a) with a = sqrt(1 / fan_in) for weights and biases alike.
  static EncoderParams init(std::size_t in_channels, std::uint64_t seed);
  /// All tensors zero; encode() then fails on the zero embedding.
  static EncoderParams zeros(std::size_t in_channels);

  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  std::size_t parameter_count() const;

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

/// Linear classifier over h: logits = W h + b, W is [classes x 64].
struct LinearHead {
  Tensor weight;
  Tensor bias;

  static LinearHead init(std::size_t num_classes, std::size_t in_dim, std::uint64_t seed);
  static LinearHead zeros(std::size_t num_classes, std::size_t in_dim);
  std::size_t num_classes() const { return weight.dim(0); }

  friend bool operator==(const LinearHead&, const LinearHead&) = default;
};

struct Encoding {
  Tensor h;  // [64] or [B x 64]
  Tensor z;  // [32] or [B x 32], unit rows
};

Encoding encode(const EncoderParams& params, const SensorWindow& window);

/// Batched forward; x is [B x channels x steps].
Encoding encode_batch(const EncoderParams& params, const Tensor& x);

/// Stacks windows into [B x C x T]. All windows must share a shape.
Tensor stack_windows(std::span<const SensorWindow* const> windows);
Tensor stack_windows(const std::vector<SensorWindow>& windows);

/// Tape-tracked parameters of one encoder, in named() order.
struct EncoderVars {
  std::vector<Var> params;

  static EncoderVars track(Tape& tape, const EncoderParams& p);
  static EncoderVars freeze(Tape& tape, const EncoderParams& p);
  std::vector<Tensor> grads(const Tape& tape) const;
};

struct EncodedVars {
  Var h;
  Var z;
};

EncodedVars encode(const EncoderVars& vars, Var x);

struct HeadVars {
  Var weight;
  Var bias;
  static HeadVars track(Tape& tape, const LinearHead& head);
};

Var classify(const HeadVars& head, Var h);

/// logits [classes] for h [64], or [B x classes] for h [B x 64].
Tensor classify(const LinearHead& head, const Tensor& h);

}  // namespace sicl
