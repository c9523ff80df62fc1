#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "sicl/tensor.hpp"

namespace sicl {

class Temperature {
 public:
  explicit Temperature(double tau);
  double value() const noexcept { return tau_; }

 private:
  double tau_;
};

/// Unit-norm embeddings with the metadata that defines positives and negatives.
struct EmbeddingBatch {
  Tensor z;  // N x d, rows unit norm
  std::vector<int> subject_ids;
  std::vector<int> labels;           // empty for unsupervised losses
  std::vector<std::size_t> view_of;  // positive partner of each row; empty when unused

  std::size_t size() const { return z.rank() == 2 ? z.dim(0) : 0; }

  /// Rows 2k and 2k+1 are the two views of sample k.
  static EmbeddingBatch two_view(Tensor z, std::vector<int> subject_ids, std::vector<int> labels = {});

  /// Throws ContractError on non-unit rows, mismatched metadata or a bad pairing.
  void validate(bool need_pairing, bool need_labels) const;
};

/// How same-subject negatives are weighted: by the batch-wise Q construction or by 1.
enum class QMode { kBatch, kUnit };

struct AnchorStats {
  double loss = 0.0;
  double p = 0.0;  // same-subject share of negative mass
  double q = 1.0;  // weight applied to same-subject negatives
};

struct LossResult {
  double value = 0.0;
  Tensor grad_z;
  std::vector<AnchorStats> anchors;
  bool q_fallback = false;  // no anchor had a same-subject negative
};

/// Two-modality result; anchors lists the k->m direction then m->k.
struct CrossModalLossResult {
  double value = 0.0;
  Tensor grad_k;
  Tensor grad_m;
  std::vector<AnchorStats> anchors;
  bool q_fallback = false;
};

struct QWeights {
  std::vector<double> p;
  std::vector<double> q;
  bool fallback = false;
};

/// Per-anchor same-subject weights over the unsupervised negative set
/// A(i) = all rows except i and its positive. p_i is the share of the
/// negative softmax mass held by same-subject negatives, q_i = p_i / mean(p)
/// over anchors that have any same-subject negative. Treated as constant in
/// every gradient below.
QWeights q_weight(const EmbeddingBatch& batch, Temperature tau);

/// InfoNCE over two-view pairs; the positive is part of the denominator.
LossResult nce_loss(const EmbeddingBatch& batch, Temperature tau);

/// InfoNCE with same-subject negatives scaled by Q.
LossResult sicl_loss(const EmbeddingBatch& batch, Temperature tau, QMode mode = QMode::kBatch);

/// Supervised contrastive loss, 1/|P(i)| outside the log, denominator over all rows but i.
LossResult supcon_loss(const EmbeddingBatch& batch, Temperature tau);

/// SupCon with same-subject different-label negatives scaled by Q.
LossResult si_supcon_loss(const EmbeddingBatch& batch, Temperature tau, QMode mode = QMode::kBatch);

/// Cross-modal InfoNCE summed over both anchoring directions, mean over 2N anchors.
CrossModalLossResult cmc_loss(const EmbeddingBatch& batch_k, const EmbeddingBatch& batch_m,
                              Temperature tau);

/// CMC with cross-modal same-subject negatives scaled by a per-direction Q.
CrossModalLossResult si_cmc_loss(const EmbeddingBatch& batch_k, const EmbeddingBatch& batch_m,
                                 Temperature tau, QMode mode = QMode::kBatch);

/// Debug dump: anchor,p,q,loss.
void write_anchor_csv(std::ostream& os, std::span<const AnchorStats> anchors);

}  // namespace sicl
