#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sicl/config.hpp"
#include "sicl/losses.hpp"
#include "sicl/model.hpp"
#include "sicl/synthgen.hpp"

namespace sicl {

/// Record of every (subject, window) consumed by a training step.
class AuditLog {
 public:
  void record(const SensorWindow& w) { consumed_.emplace(w.subject_id, w.index); }
  const std::set<std::pair<int, std::size_t>>& consumed() const { return consumed_; }
  /// Number of consumed windows whose subject is in `held_out`.
  std::size_t violations(const std::set<int>& held_out) const;
  void merge(const AuditLog& other) { consumed_.insert(other.consumed_.begin(), other.consumed_.end()); }

 private:
  std::set<std::pair<int, std::size_t>> consumed_;
};

/// Encoders of a run: one for the unimodal losses, two (inertial, secondary)
/// for the cross-modal ones.
struct EncoderSet {
  std::vector<EncoderParams> encoders;

  static EncoderSet init(LossKind loss, std::uint64_t seed);
  std::size_t feature_dim() const { return encoders.size() * kReprDim; }
};

struct PretrainResult {
  EncoderSet model;
  std::vector<double> loss_curve;  // mean batch loss per epoch
  AuditLog audit;
  std::vector<AnchorStats> last_anchors;  // per-anchor stats of the final batch
};

struct SimStats {
  double mean_all = 0.0;
  double std_all = 0.0;
  double mean_intra_subject = 0.0;
  double std_intra_subject = 0.0;
  double gap = 0.0;
  std::size_t pairs_all = 0;
  std::size_t pairs_intra_subject = 0;
  std::vector<double> bin_edges;  // 51 edges over [-1, 1]
  std::vector<std::size_t> hist_all;
  std::vector<std::size_t> hist_intra_subject;
};

struct EvalReport {
  std::string tag;
  std::map<int, double> per_class_accuracy;
  double mean_class_accuracy = 0.0;
  std::vector<int> excluded_classes;
  std::optional<SimStats> sim_stats;
  nlohmann::json config_echo;
  double wall_seconds = 0.0;
};

/// Cross-subject view of the configured world.
struct Experiment {
  std::vector<SensorWindow> windows;
  Split split;

  static Experiment build(const RunConfig& config);
  static Experiment from_windows(std::vector<SensorWindow> windows, const RunConfig& config);
};

/// Contrastive pretraining on train-subject windows only.
PretrainResult pretrain(const RunConfig& config, const Experiment& data);

/// Frozen-encoder linear evaluation: a softmax head on h of train-subject
/// windows, scored class-wise on held-out-subject windows.
EvalReport linear_eval(const EncoderSet& model, const RunConfig& config, const Experiment& data,
                       AuditLog* audit = nullptr);

struct FinetuneResult {
  EvalReport report;
  EncoderSet model;
  LinearHead head;
};

/// Encoder plus head trained end to end with cross-entropy on train subjects.
/// `init` nullopt means random initialization. The head starts from a linear
/// probe on the starting encoder. Unimodal only (inertial).
FinetuneResult finetune(const std::optional<EncoderSet>& init, const RunConfig& config,
                        const Experiment& data, AuditLog* audit = nullptr);

/// Cosine-similarity populations over z (first encoder) of `windows`.
SimStats analyze_similarities(const EncoderParams& encoder, const std::vector<SensorWindow>& windows,
                              std::uint64_t seed, std::size_t max_pairs = 1'000'000);

/// Same analysis on precomputed unit-norm embeddings [N x d].
SimStats similarity_stats(const Tensor& z, const std::vector<int>& subject_ids, std::uint64_t seed,
                          std::size_t max_pairs = 1'000'000);

// Probe building blocks, exposed for oracle tests.
struct ProbeData {
  Tensor features;  // N x F
  std::vector<int> labels;
};

/// Trains a linear softmax classifier from a zero head with Adam on standardized features.
/// The returned head acts on raw (unstandardized) features.
LinearHead train_linear_probe(const ProbeData& train, int num_classes, const RunConfig& config,
                              std::uint64_t seed);

struct ClasswiseAccuracy {
  std::map<int, double> per_class;
  double mean = 0.0;
  std::vector<int> excluded;
};

ClasswiseAccuracy classwise_accuracy(const LinearHead& head, const ProbeData& test, int num_classes);

/// h of the chosen encoders for `windows`; cross-modal sets concatenate both modalities.
ProbeData probe_features(const EncoderSet& model, const std::vector<SensorWindow>& windows);

struct MatrixRow {
  LossKind loss;
  std::uint64_t seed;
  double mean_class_accuracy = 0.0;
  double gap = 0.0;
  std::optional<std::string> error;
  std::vector<double> loss_curve;
};

/// Pretrain + linear-eval + similarity analysis per config; failures are
/// reported per row. Up to `jobs` cells run concurrently.
std::vector<MatrixRow> run_matrix(const std::vector<RunConfig>& configs, int jobs = 1,
                                  const std::function<void(const MatrixRow&)>& on_row = {});

nlohmann::json to_json(const SimStats& s);
nlohmann::json to_json(const EvalReport& r);

}  // namespace sicl
