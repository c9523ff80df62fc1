#pragma once

#include <array>
#include <cstdint>

#include "sicl/rng.hpp"
#include "sicl/window.hpp"

namespace sicl {

/// Random view generator for contrastive pairs. Transforms run in the order
/// scale, rotate, jitter, permute. With sigma 0, range [1,1], rotation off and
/// a single segment the policy is the identity map.
struct AugmentationPolicy {
  double jitter_sigma = 0.05;
  double scale_lo = 0.9;
  double scale_hi = 1.1;
  /// Rotates each consecutive channel triplet; skipped when channels % 3 != 0.
  bool rotation_enabled = true;
  std::size_t permute_segments = 4;
  /// Selects the augmentation substream of a run; training draws views from
  /// derive_seed(run seed, "augment", rng_seed).
  std::uint64_t rng_seed = 0;

  static AugmentationPolicy neutral();
  void validate() const;
};

SensorWindow augment(const AugmentationPolicy& policy, const SensorWindow& x, Rng& draw);

/// Uniformly distributed rotation in SO(3), row-major 3x3.
std::array<double, 9> random_rotation(Rng& draw);

}  // namespace sicl
