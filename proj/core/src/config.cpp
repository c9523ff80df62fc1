#include "sicl/config.hpp"

#include <fstream>

#include "sicl/errors.hpp"

namespace sicl {
namespace {

constexpr std::pair<LossKind, std::string_view> kLossNames[] = {
    {LossKind::kNce, "nce"},       {LossKind::kSicl, "sicl"}, {LossKind::kSupCon, "supcon"},
    {LossKind::kSiSupCon, "si_supcon"}, {LossKind::kCmc, "cmc"},   {LossKind::kSiCmc, "si_cmc"},
};

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& section) {
  if (!j.is_object()) throw ContractError("config: " + section + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ContractError("config: unknown key '" + section + key + "'");
  }
}

}  // namespace

std::string_view loss_name(LossKind kind) {
  for (const auto& [k, name] : kLossNames)
    if (k == kind) return name;
  return "?";
}

LossKind parse_loss(std::string_view name) {
  for (const auto& [k, n] : kLossNames)
    if (n == name) return k;
  throw ContractError("unknown loss '" + std::string(name) +
                      "' (expected nce, sicl, supcon, si_supcon, cmc, si_cmc)");
}

bool is_cross_modal(LossKind kind) { return kind == LossKind::kCmc || kind == LossKind::kSiCmc; }
bool is_supervised(LossKind kind) { return kind == LossKind::kSupCon || kind == LossKind::kSiSupCon; }

RunConfig RunConfig::desk_default() {
  RunConfig c;
  for (int s = 0; s < 8; ++s) c.split.train_subjects.insert(s);
  for (int s = 8; s < 12; ++s) c.split.test_subjects.insert(s);
  return c;
}

void RunConfig::validate() const {
  if (!(tau > 0.0)) throw ContractError("config: tau must be > 0");
  if (!(lr >= 0.0)) throw ContractError("config: lr must be >= 0");
  if (pretrain_epochs < 1 || linear_epochs < 1) throw ContractError("config: epochs must be positive");
  if (batch_size < 4) throw ContractError("config: batch_size must be >= 4");
  if (probe_batch_size < 1) throw ContractError("config: probe_batch_size must be >= 1");
  world.validate();
  augmentation.validate();
  if (split.train_subjects.empty()) throw ContractError("config: no training subjects");
  for (int s : split.train_subjects) {
    if (split.test_subjects.contains(s)) {
      throw ContractError("config: subject " + std::to_string(s) + " is in both train and test");
    }
  }
  for (const auto* set : {&split.train_subjects, &split.test_subjects})
    for (int s : *set)
      if (s < 0 || s >= world.num_subjects) {
        throw ContractError("config: subject " + std::to_string(s) + " does not exist in the world");
      }
}

void to_json(nlohmann::json& j, const WorldSpec& w) {
  j = {{"num_subjects", w.num_subjects},
       {"num_activities", w.num_activities},
       {"windows_per_pair", w.windows_per_pair},
       {"subject_nuisance_strength", w.subject_nuisance_strength},
       {"noise_sigma", w.noise_sigma},
       {"rng_seed", w.rng_seed}};
}

void from_json(const nlohmann::json& j, WorldSpec& w) {
  reject_unknown(j, {"num_subjects", "num_activities", "windows_per_pair", "subject_nuisance_strength", "noise_sigma",
                     "rng_seed"},
                 "world.");
  read_if(j, "num_subjects", w.num_subjects);
  read_if(j, "num_activities", w.num_activities);
  read_if(j, "windows_per_pair", w.windows_per_pair);
  read_if(j, "subject_nuisance_strength", w.subject_nuisance_strength);
  read_if(j, "noise_sigma", w.noise_sigma);
  read_if(j, "rng_seed", w.rng_seed);
}

void to_json(nlohmann::json& j, const AugmentationPolicy& a) {
  j = {{"jitter_sigma", a.jitter_sigma},
       {"scale_range", {a.scale_lo, a.scale_hi}},
       {"rotation_enabled", a.rotation_enabled},
       {"permute_segments", a.permute_segments},
       {"rng_seed", a.rng_seed}};
}

void from_json(const nlohmann::json& j, AugmentationPolicy& a) {
  reject_unknown(j, {"jitter_sigma", "scale_range", "rotation_enabled", "permute_segments", "rng_seed"},
                 "augmentation.");
  read_if(j, "jitter_sigma", a.jitter_sigma);
  if (j.contains("scale_range")) {
    const auto& r = j.at("scale_range");
    if (!r.is_array() || r.size() != 2) throw ContractError("config: scale_range must be [lo, hi]");
    a.scale_lo = r[0].get<double>();
    a.scale_hi = r[1].get<double>();
  }
  read_if(j, "rotation_enabled", a.rotation_enabled);
  read_if(j, "permute_segments", a.permute_segments);
  read_if(j, "rng_seed", a.rng_seed);
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"loss", loss_name(c.loss)},
       {"tau", c.tau},
       {"lr", c.lr},
       {"pretrain_epochs", c.pretrain_epochs},
       {"linear_epochs", c.linear_epochs},
       {"batch_size", c.batch_size},
       {"probe_batch_size", c.probe_batch_size},
       {"max_similarity_pairs", c.max_similarity_pairs},
       {"seed", c.seed},
       {"world", c.world},
       {"augmentation", c.augmentation},
       {"split", {{"train_subjects", c.split.train_subjects}, {"test_subjects", c.split.test_subjects}}}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  reject_unknown(j,
                 {"loss", "tau", "lr", "pretrain_epochs", "linear_epochs", "batch_size", "probe_batch_size",
                  "max_similarity_pairs", "seed", "world", "augmentation", "split"},
                 "");
  if (j.contains("loss")) c.loss = parse_loss(j.at("loss").get<std::string>());
  read_if(j, "tau", c.tau);
  read_if(j, "lr", c.lr);
  read_if(j, "pretrain_epochs", c.pretrain_epochs);
  read_if(j, "linear_epochs", c.linear_epochs);
  read_if(j, "batch_size", c.batch_size);
  read_if(j, "probe_batch_size", c.probe_batch_size);
  read_if(j, "max_similarity_pairs", c.max_similarity_pairs);
  read_if(j, "seed", c.seed);
  if (j.contains("world")) j.at("world").get_to(c.world);
  if (j.contains("augmentation")) j.at("augmentation").get_to(c.augmentation);
  if (j.contains("split")) {
    const auto& s = j.at("split");
    reject_unknown(s, {"train_subjects", "test_subjects"}, "split.");
    read_if(s, "train_subjects", c.split.train_subjects);
    read_if(s, "test_subjects", c.split.test_subjects);
  }
}

void apply_override(nlohmann::json& j, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ContractError("override '" + std::string(assignment) + "' is not key=value");
  }
  std::string pointer;
  std::string_view key = assignment.substr(0, eq);
  while (!key.empty()) {
    const auto dot = key.find('.');
    pointer += "/" + std::string(key.substr(0, dot));
    key = dot == std::string_view::npos ? std::string_view{} : key.substr(dot + 1);
  }
  const std::string raw(assignment.substr(eq + 1));
  nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  j[nlohmann::json::json_pointer(pointer)] = value;
}

RunConfig load_config(const std::optional<std::string>& path, const std::vector<std::string>& overrides) {
  nlohmann::json j = RunConfig::desk_default();
  if (path) {
    std::ifstream is(*path);
    if (!is) throw ContractError("cannot open config " + *path);
    nlohmann::json file;
    try {
      file = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
      throw ContractError("config " + *path + ": " + e.what());
    }
    j.merge_patch(file);
  }
  for (const auto& o : overrides) apply_override(j, o);
  RunConfig c;
  try {
    c = j.get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace sicl
