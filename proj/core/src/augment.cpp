#include "sicl/augment.hpp"

#include <cmath>
#include <numeric>
#include <vector>

#include "sicl/errors.hpp"

namespace sicl {

std::string_view modality_name(Modality m) {
  return m == Modality::kInertial ? "inertial" : "secondary";
}

AugmentationPolicy AugmentationPolicy::neutral() {
  AugmentationPolicy p;
  p.jitter_sigma = 0.0;
  p.scale_lo = p.scale_hi = 1.0;
  p.rotation_enabled = false;
  p.permute_segments = 1;
  return p;
}

void AugmentationPolicy::validate() const {
  if (!(jitter_sigma >= 0.0)) throw ContractError("augmentation: jitter_sigma must be >= 0");
  if (!(scale_lo > 0.0) || !(scale_lo <= scale_hi)) {
    throw ContractError("augmentation: scale_range must satisfy 0 < lo <= hi");
  }
  if (permute_segments < 1) throw ContractError("augmentation: permute_segments must be >= 1");
}

std::array<double, 9> random_rotation(Rng& draw) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  double w, x, y, z, n;
  do {
    w = gauss(draw);
    x = gauss(draw);
    y = gauss(draw);
    z = gauss(draw);
    n = std::sqrt(w * w + x * x + y * y + z * z);
  } while (n < 1e-12);
  w /= n, x /= n, y /= n, z /= n;
  return {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
          2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
          2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
}

SensorWindow augment(const AugmentationPolicy& policy, const SensorWindow& x, Rng& draw) {
  policy.validate();
  if (x.values.rank() != 2 || x.values.empty()) throw ContractError("augment: empty window");
  const std::size_t C = x.channels(), T = x.steps();
  if (T < policy.permute_segments) {
    throw ContractError("augment: " + std::to_string(T) + " steps cannot form " +
                        std::to_string(policy.permute_segments) + " segments");
  }

  SensorWindow out = x;
  double* v = out.values.raw();

  if (policy.scale_lo != 1.0 || policy.scale_hi != 1.0) {
    std::uniform_real_distribution<double> factor(policy.scale_lo, policy.scale_hi);
    for (std::size_t c = 0; c < C; ++c) {
      const double f = policy.scale_lo == policy.scale_hi ? policy.scale_lo : factor(draw);
      for (std::size_t t = 0; t < T; ++t) v[c * T + t] *= f;
    }
  }

  if (policy.rotation_enabled && C % 3 == 0) {
    for (std::size_t g = 0; g < C; g += 3) {
      const auto r = random_rotation(draw);
      for (std::size_t t = 0; t < T; ++t) {
        const double a = v[g * T + t], b = v[(g + 1) * T + t], c = v[(g + 2) * T + t];
        v[g * T + t] = r[0] * a + r[1] * b + r[2] * c;
        v[(g + 1) * T + t] = r[3] * a + r[4] * b + r[5] * c;
        v[(g + 2) * T + t] = r[6] * a + r[7] * b + r[8] * c;
      }
    }
  }

  if (policy.jitter_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, policy.jitter_sigma);
    for (std::size_t i = 0; i < out.values.size(); ++i) v[i] += noise(draw);
  }

  if (policy.permute_segments > 1) {
    const std::size_t n = policy.permute_segments;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i);
      std::swap(order[i], order[pick(draw)]);
    }
    const Tensor src = out.values;
    for (std::size_t c = 0; c < C; ++c) {
      std::size_t dst = 0;
      for (std::size_t s : order) {
        const std::size_t lo = s * T / n, hi = (s + 1) * T / n;
        for (std::size_t t = lo; t < hi; ++t) v[c * T + dst++] = src[c * T + t];
      }
    }
  }
  return out;
}

}  // namespace sicl
