#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace sicl {

using Rng = std::mt19937_64;

/// Deterministic child seed for a named stream. Every random draw in the
/// library is reached from a single root seed through this function, so a
/// stream can be reproduced without replaying its siblings.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t parent, std::string_view stream, std::uint64_t index);

inline Rng make_rng(std::uint64_t parent, std::string_view stream) {
  return Rng(derive_seed(parent, stream));
}

}  // namespace sicl
