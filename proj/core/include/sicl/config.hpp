#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sicl/augment.hpp"
#include "sicl/synthgen.hpp"

namespace sicl {

enum class LossKind { kNce, kSicl, kSupCon, kSiSupCon, kCmc, kSiCmc };

std::string_view loss_name(LossKind kind);
LossKind parse_loss(std::string_view name);
bool is_cross_modal(LossKind kind);
bool is_supervised(LossKind kind);

struct SplitSpec {
  std::set<int> train_subjects;
  std::set<int> test_subjects;
};

/// Everything a run depends on. `seed` roots every training-side random
/// stream (initialization, batching, augmentation, probe subsampling);
/// world.rng_seed fixes the dataset.
struct RunConfig {
  LossKind loss = LossKind::kSicl;
  double tau = 0.1;
  double lr = 1e-3;
  int pretrain_epochs = 60;
  int linear_epochs = 30;
  int batch_size = 64;
  std::uint64_t seed = 1;
  WorldSpec world;
  AugmentationPolicy augmentation;
  SplitSpec split;
  /// Linear probe / finetune mini-batch size.
  int probe_batch_size = 16;
  /// Pair budget for the cosine-similarity populations.
  std::size_t max_similarity_pairs = 1'000'000;

  static RunConfig desk_default();
  void validate() const;
};

void to_json(nlohmann::json& j, const WorldSpec& w);
void from_json(const nlohmann::json& j, WorldSpec& w);
void to_json(nlohmann::json& j, const AugmentationPolicy& a);
void from_json(const nlohmann::json& j, AugmentationPolicy& a);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Applies "dotted.key=value" overrides; value is parsed as JSON when it can
/// be, otherwise taken as a string.
void apply_override(nlohmann::json& j, std::string_view assignment);

RunConfig load_config(const std::optional<std::string>& path, const std::vector<std::string>& overrides);

}  // namespace sicl
