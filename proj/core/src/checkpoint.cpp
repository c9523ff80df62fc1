#include "sicl/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "binio.hpp"
#include "sicl/errors.hpp"

namespace sicl {

std::string serialize_checkpoint(const NamedTensors& tensors) {
  std::ostringstream os(std::ios::binary);
  os.write("SICKPT", 6);
  binio::put<std::uint16_t>(os, kCheckpointVersion);
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    binio::put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    binio::put<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (double v : t.data()) binio::put<double>(os, v);
  }
  return std::move(os).str();
}

NamedTensors deserialize_checkpoint(const std::string& bytes, const std::string& origin) {
  std::istringstream is(bytes, std::ios::binary);
  binio::expect_magic(is, "SICKPT", origin);
  const auto version = binio::get<std::uint16_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw ContractError(origin + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = binio::get<std::uint32_t>(is, "tensor count");
  NamedTensors out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = binio::get<std::uint16_t>(is, "name length");
    std::string name(len, '\0');
    is.read(name.data(), len);
    if (!is) throw ContractError(origin + ": truncated tensor name");
    const auto rank = binio::get<std::uint8_t>(is, "rank");
    Shape shape(rank);
    for (auto& d : shape) d = binio::get<std::uint32_t>(is, "dimension");
    Tensor t(shape);
    for (double& v : t.data()) v = binio::get<double>(is, "tensor data");
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

void write_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ContractError("cannot open " + path.string() + " for writing");
  const std::string bytes = serialize_checkpoint(tensors);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw ContractError("write failed: " + path.string());
}

NamedTensors read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ContractError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return deserialize_checkpoint(buf.str(), path.string());
}

void pack_encoder(NamedTensors& out, const EncoderParams& params, std::string_view prefix) {
  for (const auto& [name, t] : params.named()) out.emplace_back(std::string(prefix) + "." + name, *t);
}

bool has_encoder(const NamedTensors& tensors, std::string_view prefix) {
  const std::string key = std::string(prefix) + ".conv1.weight";
  for (const auto& [name, t] : tensors)
    if (name == key) return true;
  return false;
}

EncoderParams unpack_encoder(const NamedTensors& tensors, std::string_view prefix) {
  EncoderParams p;
  for (auto& [name, slot] : p.named()) {
    const std::string key = std::string(prefix) + "." + name;
    bool found = false;
    for (const auto& [stored, t] : tensors) {
      if (stored == key) {
        *slot = t;
        found = true;
        break;
      }
    }
    if (!found) throw ContractError("checkpoint is missing tensor " + key);
  }
  if (p.conv1_w.rank() != 3) throw ShapeError("checkpoint conv1.weight must be rank 3");
  p.in_channels = p.conv1_w.dim(1);
  const EncoderParams reference = EncoderParams::zeros(p.in_channels);
  for (std::size_t i = 0; i < reference.named().size(); ++i) {
    if (reference.named()[i].second->shape() != p.named()[i].second->shape()) {
      throw ShapeError("checkpoint tensor " + reference.named()[i].first + " has shape " +
                       shape_string(p.named()[i].second->shape()));
    }
  }
  return p;
}

std::uint64_t checkpoint_hash(const EncoderParams& params) {
  NamedTensors t;
  pack_encoder(t, params, "encoder");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : serialize_checkpoint(t)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace sicl
