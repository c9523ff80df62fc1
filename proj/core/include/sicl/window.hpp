#pragma once

#include <cstdint>
#include <string_view>

#include "sicl/tensor.hpp"

namespace sicl {

enum class Modality : std::uint8_t { kInertial = 0, kSecondary = 1 };

std::string_view modality_name(Modality m);

inline constexpr std::size_t kWindowSteps = 100;

/// One fixed-length multichannel time-series window: values is [channels x steps].
struct SensorWindow {
  Tensor values;
  int subject_id = 0;
  int activity_id = 0;
  Modality modality = Modality::kInertial;
  /// Position in the generated dataset; windows 2k and 2k+1 form session k.
  std::size_t index = 0;

  std::size_t channels() const { return values.rank() == 2 ? values.dim(0) : 0; }
  std::size_t steps() const { return values.rank() == 2 ? values.dim(1) : 0; }
};

}  // namespace sicl
