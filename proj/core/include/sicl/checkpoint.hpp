#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sicl/model.hpp"

namespace sicl {

inline constexpr std::uint16_t kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// "SICKPT", version u16, tensor count u32; per tensor a u16-length name,
/// rank u8, u32 dims and little-endian f64 data.
std::string serialize_checkpoint(const NamedTensors& tensors);
NamedTensors deserialize_checkpoint(const std::string& bytes, const std::string& origin = "<memory>");

void write_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors read_checkpoint(const std::filesystem::path& path);

/// Encoder tensors under "<prefix>.<name>".
void pack_encoder(NamedTensors& out, const EncoderParams& params, std::string_view prefix);
EncoderParams unpack_encoder(const NamedTensors& tensors, std::string_view prefix);
bool has_encoder(const NamedTensors& tensors, std::string_view prefix);

/// FNV-1a over the serialized form; equal hashes mean byte-identical checkpoints.
std::uint64_t checkpoint_hash(const EncoderParams& params);

}  // namespace sicl
