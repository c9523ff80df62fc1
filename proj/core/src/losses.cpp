#include "sicl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "kernels.hpp"
#include "sicl/errors.hpp"

namespace sicl {

Temperature::Temperature(double tau) : tau_(tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ContractError("temperature must be > 0");
}

EmbeddingBatch EmbeddingBatch::two_view(Tensor z, std::vector<int> subject_ids,
                                        std::vector<int> labels) {
  EmbeddingBatch b{std::move(z), std::move(subject_ids), std::move(labels), {}};
  const std::size_t n = b.size();
  b.view_of.resize(n);
  for (std::size_t i = 0; i < n; ++i) b.view_of[i] = i ^ 1U;
  return b;
}

void EmbeddingBatch::validate(bool need_pairing, bool need_labels) const {
  if (z.rank() != 2) throw ContractError("embedding batch must be N x d");
  const std::size_t n = size(), d = z.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) sq += z[i * d + k] * z[i * d + k];
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-9) {
      throw ContractError("embedding row " + std::to_string(i) + " is not unit norm");
    }
  }
  if (subject_ids.size() != n) throw ContractError("subject_ids length differs from batch size");
  if (need_labels && labels.size() != n) throw ContractError("labels length differs from batch size");
  if (need_pairing) {
    if (view_of.size() != n) throw ContractError("view_of length differs from batch size");
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = view_of[i];
      if (j >= n || j == i || view_of[j] != i) {
        throw ContractError("view_of is not an involution on distinct rows at " + std::to_string(i));
      }
    }
  }
}

namespace {

enum class Role : unsigned char { kExcluded, kPositive, kSameSubject, kOther };

// One anchoring direction: anchor rows X against candidate rows Y under a role
// matrix. Adds into grad_x / grad_y the gradient of (sum of anchor losses) / divisor.
struct Direction {
  const Tensor& x;
  const Tensor& y;
  std::vector<Role> roles;  // N x M
};

struct DirectionOutput {
  double loss_sum = 0.0;
  std::vector<AnchorStats> anchors;
  bool fallback = false;
};

Tensor similarities(const Tensor& x, const Tensor& y, double inv_tau) {
  const std::size_t n = x.dim(0), m = y.dim(0), d = x.dim(1);
  Tensor s({n, m});
  kernels::gemm_nt(n, d, m, x.raw(), y.raw(), s.raw());
  for (double& v : s.data()) v *= inv_tau;
  return s;
}

DirectionOutput contrast(const Direction& dir, Temperature tau, QMode mode, double divisor,
                         Tensor& grad_x, Tensor& grad_y, const std::vector<int>* labels_for_error) {
  const std::size_t n = dir.x.dim(0), m = dir.y.dim(0), d = dir.x.dim(1);
  const double inv_tau = 1.0 / tau.value();
  const Tensor s = similarities(dir.x, dir.y, inv_tau);

  DirectionOutput out;
  out.anchors.resize(n);
  std::vector<double> shift(n), e(n * m, 0.0);
  std::vector<char> has_same(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const Role* role = &dir.roles[i * m];
    double hi = -std::numeric_limits<double>::infinity();
    std::size_t positives = 0, negatives = 0;
    for (std::size_t a = 0; a < m; ++a) {
      if (role[a] == Role::kExcluded) continue;
      hi = std::max(hi, s[i * m + a]);
      positives += role[a] == Role::kPositive;
      negatives += role[a] == Role::kSameSubject || role[a] == Role::kOther;
    }
    if (positives == 0) {
      std::string what = "anchor " + std::to_string(i) + " has no positive";
      if (labels_for_error) what += " (class " + std::to_string((*labels_for_error)[i]) + ")";
      throw ContractError(what);
    }
    // Supervised denominators run over every other row, so a single-class batch is legal.
    if (negatives == 0 && !labels_for_error) {
      throw ContractError("anchor " + std::to_string(i) + " has no negatives");
    }
    shift[i] = hi;
    double same = 0.0, neg = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
      if (role[a] == Role::kExcluded) continue;
      const double v = std::exp(s[i * m + a] - hi);
      e[i * m + a] = v;
      if (role[a] == Role::kSameSubject) {
        same += v;
        has_same[i] = 1;
      }
      if (role[a] != Role::kPositive) neg += v;
    }
    out.anchors[i].p = neg > 0.0 ? same / neg : 0.0;
  }

  double p_total = 0.0;
  std::size_t p_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (has_same[i]) {
      p_total += out.anchors[i].p;
      ++p_count;
    }
  }
  out.fallback = p_count == 0;
  const double p_mean = p_count ? p_total / static_cast<double>(p_count) : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    out.anchors[i].q = (mode == QMode::kUnit || out.fallback) ? 1.0 : out.anchors[i].p / p_mean;
  }

  Tensor g({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    const Role* role = &dir.roles[i * m];
    const double q = out.anchors[i].q;
    double denom = 0.0, pos_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t a = 0; a < m; ++a) {
      if (role[a] == Role::kExcluded) continue;
      denom += (role[a] == Role::kSameSubject ? q : 1.0) * e[i * m + a];
      if (role[a] == Role::kPositive) {
        pos_sum += s[i * m + a];
        ++positives;
      }
    }
    const double inv_p = 1.0 / static_cast<double>(positives);
    const double loss = -pos_sum * inv_p + shift[i] + std::log(denom);
    out.anchors[i].loss = loss;
    out.loss_sum += loss;
    const double scale = inv_tau / divisor;
    for (std::size_t a = 0; a < m; ++a) {
      if (role[a] == Role::kExcluded) continue;
      const double weight = role[a] == Role::kSameSubject ? q : 1.0;
      double gs = weight * e[i * m + a] / denom;
      if (role[a] == Role::kPositive) gs -= inv_p;
      g[i * m + a] = gs * scale;
    }
  }
  kernels::gemm_nn(n, m, d, g.raw(), dir.y.raw(), grad_x.raw());
  kernels::gemm_tn(n, m, d, g.raw(), dir.x.raw(), grad_y.raw());
  return out;
}

std::vector<Role> pair_roles(const EmbeddingBatch& b, bool split_subjects) {
  const std::size_t n = b.size();
  std::vector<Role> roles(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < n; ++a) {
      Role r = Role::kOther;
      if (a == i) r = Role::kExcluded;
      else if (a == b.view_of[i]) r = Role::kPositive;
      else if (split_subjects && b.subject_ids[a] == b.subject_ids[i]) r = Role::kSameSubject;
      roles[i * n + a] = r;
    }
  return roles;
}

std::vector<Role> label_roles(const EmbeddingBatch& b, bool split_subjects) {
  const std::size_t n = b.size();
  std::vector<Role> roles(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < n; ++a) {
      Role r = Role::kOther;
      if (a == i) r = Role::kExcluded;
      else if (b.labels[a] == b.labels[i]) r = Role::kPositive;
      else if (split_subjects && b.subject_ids[a] == b.subject_ids[i]) r = Role::kSameSubject;
      roles[i * n + a] = r;
    }
  return roles;
}

std::vector<Role> cross_roles(const EmbeddingBatch& anchors, const EmbeddingBatch& candidates,
                              bool split_subjects) {
  const std::size_t n = anchors.size();
  std::vector<Role> roles(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < n; ++a) {
      Role r = Role::kOther;
      if (a == i) r = Role::kPositive;
      else if (split_subjects && candidates.subject_ids[a] == anchors.subject_ids[i]) r = Role::kSameSubject;
      roles[i * n + a] = r;
    }
  return roles;
}

LossResult single_batch(const EmbeddingBatch& b, Temperature tau, QMode mode, std::vector<Role> roles,
                        bool labelled) {
  const std::size_t n = b.size();
  LossResult r;
  r.grad_z = Tensor(b.z.shape());
  Tensor grad_y(b.z.shape());
  const Direction dir{b.z, b.z, std::move(roles)};
  auto out = contrast(dir, tau, mode, static_cast<double>(n), r.grad_z, grad_y,
                      labelled ? &b.labels : nullptr);
  for (std::size_t i = 0; i < r.grad_z.size(); ++i) r.grad_z[i] += grad_y[i];
  r.value = out.loss_sum / static_cast<double>(n);
  r.anchors = std::move(out.anchors);
  r.q_fallback = out.fallback;
  return r;
}

void require_pairs(const EmbeddingBatch& b) {
  b.validate(true, false);
  if (b.size() < 4) throw ContractError("contrastive batch needs N >= 4 for any negative");
}

void require_labels(const EmbeddingBatch& b) {
  b.validate(false, true);
  if (b.size() < 2) throw ContractError("supervised contrastive batch needs N >= 2");
}

CrossModalLossResult cross_modal(const EmbeddingBatch& k, const EmbeddingBatch& m, Temperature tau,
                                 QMode mode, bool split_subjects) {
  k.validate(false, false);
  m.validate(false, false);
  if (k.size() != m.size() || k.z.dim(1) != m.z.dim(1)) {
    throw ContractError("cross-modal batches are not index-aligned");
  }
  if (split_subjects && k.subject_ids != m.subject_ids) {
    throw ContractError("cross-modal batches disagree on subject ids");
  }
  if (k.size() < 2) throw ContractError("cross-modal batch needs N >= 2");
  const double divisor = 2.0 * static_cast<double>(k.size());
  CrossModalLossResult r;
  r.grad_k = Tensor(k.z.shape());
  r.grad_m = Tensor(m.z.shape());
  auto fwd = contrast(Direction{k.z, m.z, cross_roles(k, m, split_subjects)}, tau, mode, divisor,
                      r.grad_k, r.grad_m, nullptr);
  auto bwd = contrast(Direction{m.z, k.z, cross_roles(m, k, split_subjects)}, tau, mode, divisor,
                      r.grad_m, r.grad_k, nullptr);
  r.value = (fwd.loss_sum + bwd.loss_sum) / divisor;
  r.anchors = std::move(fwd.anchors);
  r.anchors.insert(r.anchors.end(), bwd.anchors.begin(), bwd.anchors.end());
  r.q_fallback = fwd.fallback && bwd.fallback;
  return r;
}

}  // namespace

QWeights q_weight(const EmbeddingBatch& batch, Temperature tau) {
  const LossResult r = sicl_loss(batch, tau, QMode::kBatch);
  QWeights w;
  w.fallback = r.q_fallback;
  for (const auto& a : r.anchors) {
    w.p.push_back(a.p);
    w.q.push_back(a.q);
  }
  return w;
}

LossResult nce_loss(const EmbeddingBatch& batch, Temperature tau) {
  require_pairs(batch);
  return single_batch(batch, tau, QMode::kUnit, pair_roles(batch, false), false);
}

LossResult sicl_loss(const EmbeddingBatch& batch, Temperature tau, QMode mode) {
  require_pairs(batch);
  return single_batch(batch, tau, mode, pair_roles(batch, true), false);
}

LossResult supcon_loss(const EmbeddingBatch& batch, Temperature tau) {
  require_labels(batch);
  return single_batch(batch, tau, QMode::kUnit, label_roles(batch, false), true);
}

LossResult si_supcon_loss(const EmbeddingBatch& batch, Temperature tau, QMode mode) {
  require_labels(batch);
  return single_batch(batch, tau, mode, label_roles(batch, true), true);
}

CrossModalLossResult cmc_loss(const EmbeddingBatch& batch_k, const EmbeddingBatch& batch_m,
                              Temperature tau) {
  return cross_modal(batch_k, batch_m, tau, QMode::kUnit, false);
}

CrossModalLossResult si_cmc_loss(const EmbeddingBatch& batch_k, const EmbeddingBatch& batch_m,
                                 Temperature tau, QMode mode) {
  return cross_modal(batch_k, batch_m, tau, mode, true);
}

void write_anchor_csv(std::ostream& os, std::span<const AnchorStats> anchors) {
  os << "anchor,p,q,loss\n";
  os.precision(17);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    os << i << ',' << anchors[i].p << ',' << anchors[i].q << ',' << anchors[i].loss << '\n';
  }
}

}  // namespace sicl
