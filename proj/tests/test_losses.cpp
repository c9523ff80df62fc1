#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "sicl/errors.hpp"
#include "sicl/losses.hpp"
#include "sicl/verify/oracles.hpp"
#include "sicl/verify/suite.hpp"

namespace sicl {
namespace {

namespace vf = verify;

Tensor unit_rows(std::vector<std::vector<double>> rows) {
  for (auto& r : rows) {
    double n = 0.0;
    for (double v : r) n += v * v;
    for (double& v : r) v /= std::sqrt(n);
  }
  return vf::from_rows(rows);
}

std::vector<double> basis(std::size_t d, std::size_t k) {
  std::vector<double> e(d, 0.0);
  e[k] = 1.0;
  return e;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Random two-view batch: rows 2k, 2k+1 share subject and label.
EmbeddingBatch random_batch(std::uint64_t seed, std::size_t n, std::size_t d, int subjects, int classes) {
  Rng rng(seed);
  std::vector<int> subj, lab;
  for (std::size_t k = 0; k < n / 2; ++k) {
    const int s = static_cast<int>(k) % subjects, c = static_cast<int>((k * 7 + 3) % static_cast<std::size_t>(classes));
    subj.insert(subj.end(), {s, s});
    lab.insert(lab.end(), {c, c});
  }
  return EmbeddingBatch::two_view(vf::random_unit_rows(n, d, rng), subj, lab);
}

TEST(Nce, IdenticalEmbeddingsGiveLogThree) {
  const Tensor z = unit_rows({{1, 2}, {1, 2}, {1, 2}, {1, 2}});
  const LossResult r = nce_loss(EmbeddingBatch::two_view(z, {0, 0, 1, 1}), Temperature(0.1));
  EXPECT_NEAR(r.value, std::log(3.0), 1e-12);
  for (const auto& a : r.anchors) EXPECT_NEAR(a.loss, std::log(3.0), 1e-12);
}

TEST(Nce, OrthogonalNegativesClosedForm) {
  const Tensor z = unit_rows({basis(3, 0), basis(3, 0), basis(3, 1), basis(3, 1)});
  const LossResult r = nce_loss(EmbeddingBatch::two_view(z, {0, 0, 1, 1}), Temperature(1.0));
  const double want = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
  EXPECT_NEAR(want, 0.5514, 1e-4);
  for (const auto& a : r.anchors) EXPECT_NEAR(a.loss, want, 1e-12);
}

TEST(Nce, MatchesOracleOnRandomBatch) {
  const EmbeddingBatch b = random_batch(1, 16, 8, 4, 4);
  EXPECT_NEAR(nce_loss(b, Temperature(0.1)).value, vf::oracle_nce(vf::to_rows(b.z), b.view_of, 0.1), 1e-12);
}

TEST(Nce, NeedsNegatives) {
  const Tensor z = unit_rows({{1, 0}, {0, 1}});
  EXPECT_THROW(nce_loss(EmbeddingBatch::two_view(z, {0, 0}), Temperature(0.1)), ContractError);
}

TEST(Batch, ValidationCatchesBadInputs) {
  EmbeddingBatch b = random_batch(2, 8, 4, 2, 2);
  b.z[0] *= 1.5;
  EXPECT_THROW(nce_loss(b, Temperature(0.1)), ContractError);
  b = random_batch(2, 8, 4, 2, 2);
  b.view_of[0] = 0;
  EXPECT_THROW(nce_loss(b, Temperature(0.1)), ContractError);
  b = random_batch(2, 8, 4, 2, 2);
  b.view_of[0] = 2;  // 0->2 but 2->3
  EXPECT_THROW(sicl_loss(b, Temperature(0.1)), ContractError);
  b = random_batch(2, 8, 4, 2, 2);
  b.subject_ids.pop_back();
  EXPECT_THROW(sicl_loss(b, Temperature(0.1)), ContractError);
  EXPECT_THROW(Temperature(0.0), ContractError);
  EXPECT_THROW(Temperature(-1.0), ContractError);
}

TEST(QWeight, SingleSubjectGivesUnitWeights) {
  EmbeddingBatch b = random_batch(3, 12, 8, 1, 3);
  const QWeights w = q_weight(b, Temperature(0.1));
  EXPECT_FALSE(w.fallback);
  for (std::size_t i = 0; i < w.p.size(); ++i) {
    EXPECT_NEAR(w.p[i], 1.0, 1e-15);
    EXPECT_NEAR(w.q[i], 1.0, 1e-15);
  }
}

TEST(QWeight, SubjectPerSampleFallsBackToOne) {
  EmbeddingBatch b = random_batch(4, 12, 8, 6, 3);
  const QWeights w = q_weight(b, Temperature(0.1));
  EXPECT_TRUE(w.fallback);
  for (double q : w.q) EXPECT_EQ(q, 1.0);
  for (double p : w.p) EXPECT_EQ(p, 0.0);
}

TEST(QWeight, TightSubjectOutweighsLooseSubject) {
  // Subject 0 rows cluster around e0; subject 1 rows are mutually orthogonal.
  const std::size_t d = 8;
  auto near_e0 = [&](std::size_t k) {
    auto v = basis(d, 0);
    v[k] = 0.1;
    return v;
  };
  const Tensor z = unit_rows({near_e0(3), near_e0(3), near_e0(4), near_e0(4), basis(d, 5), basis(d, 5),
                              basis(d, 6), basis(d, 6)});
  const EmbeddingBatch b = EmbeddingBatch::two_view(z, {0, 0, 0, 0, 1, 1, 1, 1});
  const QWeights w = q_weight(b, Temperature(0.1));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_GT(w.q[i], 1.0);
  for (std::size_t i = 4; i < 8; ++i) EXPECT_LT(w.q[i], 1.0);
  EXPECT_NEAR(std::accumulate(w.q.begin(), w.q.end(), 0.0) / 8.0, 1.0, 1e-12);
  // Loose subject: two same-subject negatives among six, all at zero similarity.
  EXPECT_NEAR(w.p[4], 1.0 / 3.0, 1e-12);
}

TEST(QWeight, MeanOverAnchorsWithSameSubjectNegativesIsOne) {
  // Subject 2 appears in one pair only, so its anchors have no same-subject negatives.
  Rng rng(5);
  const EmbeddingBatch b = EmbeddingBatch::two_view(vf::random_unit_rows(10, 6, rng), {0, 0, 1, 1, 0, 0, 1, 1, 2, 2});
  const QWeights w = q_weight(b, Temperature(0.2));
  EXPECT_EQ(w.p[8], 0.0);
  EXPECT_EQ(w.p[9], 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < 8; ++i) total += w.q[i];
  EXPECT_NEAR(total / 8.0, 1.0, 1e-12);
}

TEST(Sicl, UnitQEqualsNce) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const EmbeddingBatch b = random_batch(seed, 16, 8, 3, 4);
    const LossResult a = sicl_loss(b, Temperature(0.1), QMode::kUnit), n = nce_loss(b, Temperature(0.1));
    EXPECT_NEAR(a.value, n.value, 1e-12);
    EXPECT_LE(max_abs_diff(a.grad_z, n.grad_z), 1e-12);
  }
}

TEST(Sicl, SingleSubjectEqualsNce) {
  const EmbeddingBatch b = random_batch(6, 16, 8, 1, 4);
  EXPECT_NEAR(sicl_loss(b, Temperature(0.1)).value, nce_loss(b, Temperature(0.1)).value, 1e-12);
}

TEST(Sicl, MatchesLiteralOracle) {
  const EmbeddingBatch b = random_batch(7, 16, 8, 4, 4);
  const auto rows = vf::to_rows(b.z);
  const auto q = vf::oracle_sicl_q(rows, b.subject_ids, b.view_of, 0.1);
  const LossResult r = sicl_loss(b, Temperature(0.1));
  EXPECT_NEAR(r.value, vf::oracle_sicl(rows, b.subject_ids, b.view_of, 0.1, q.q), 1e-12);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_NEAR(r.anchors[i].p, q.p[i], 1e-12);
    EXPECT_NEAR(r.anchors[i].q, q.q[i], 1e-12);
  }
}

TEST(SupCon, SingletonClassesEqualNce) {
  EmbeddingBatch b = random_batch(8, 16, 8, 3, 2);
  for (std::size_t i = 0; i < 16; ++i) b.labels[i] = static_cast<int>(i / 2);
  const LossResult s = supcon_loss(b, Temperature(0.1)), n = nce_loss(b, Temperature(0.1));
  EXPECT_NEAR(s.value, n.value, 1e-12);
  EXPECT_LE(max_abs_diff(s.grad_z, n.grad_z), 1e-12);
}

TEST(SupCon, OneClassIdenticalEmbeddingsGiveLogNMinusOne) {
  const Tensor z = unit_rows(std::vector<std::vector<double>>(6, {0.3, -0.4, 0.5}));
  const EmbeddingBatch b = EmbeddingBatch::two_view(z, {0, 0, 1, 1, 2, 2}, {4, 4, 4, 4, 4, 4});
  EXPECT_NEAR(supcon_loss(b, Temperature(0.1)).value, std::log(5.0), 1e-12);
  EXPECT_NEAR(si_supcon_loss(b, Temperature(0.1)).value, std::log(5.0), 1e-12);
}

TEST(SupCon, MatchesOracle) {
  const EmbeddingBatch b = random_batch(9, 16, 8, 4, 4);
  EXPECT_NEAR(supcon_loss(b, Temperature(0.1)).value, vf::oracle_supcon(vf::to_rows(b.z), b.labels, 0.1), 1e-12);
}

TEST(SupCon, AnchorWithoutPositiveNamesItsClass) {
  EmbeddingBatch b = random_batch(10, 8, 4, 2, 2);
  b.labels = {0, 0, 1, 1, 0, 0, 1, 9};
  try {
    supcon_loss(b, Temperature(0.1));
    FAIL() << "expected ContractError";
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("class 9"), std::string::npos) << e.what();
  }
}

TEST(SiSupCon, UnitQEqualsSupCon) {
  const EmbeddingBatch b = random_batch(11, 16, 8, 3, 3);
  const LossResult a = si_supcon_loss(b, Temperature(0.1), QMode::kUnit), s = supcon_loss(b, Temperature(0.1));
  EXPECT_NEAR(a.value, s.value, 1e-12);
  EXPECT_LE(max_abs_diff(a.grad_z, s.grad_z), 1e-12);
}

TEST(SiSupCon, SubjectPerSampleEqualsSupCon) {
  EmbeddingBatch b = random_batch(12, 12, 8, 3, 3);
  std::iota(b.subject_ids.begin(), b.subject_ids.end(), 0);
  const LossResult a = si_supcon_loss(b, Temperature(0.1));
  EXPECT_TRUE(a.q_fallback);
  EXPECT_NEAR(a.value, supcon_loss(b, Temperature(0.1)).value, 1e-12);
}

TEST(SiSupCon, MatchesOracle) {
  const EmbeddingBatch b = random_batch(13, 16, 8, 3, 4);
  const auto rows = vf::to_rows(b.z);
  const auto q = vf::oracle_si_supcon_q(rows, b.labels, b.subject_ids, 0.1);
  EXPECT_NEAR(si_supcon_loss(b, Temperature(0.1)).value,
              vf::oracle_si_supcon(rows, b.labels, b.subject_ids, 0.1, q.q), 1e-12);
}

EmbeddingBatch modality(Tensor z, std::vector<int> subjects) {
  EmbeddingBatch b;
  b.z = std::move(z);
  b.subject_ids = std::move(subjects);
  return b;
}

TEST(Cmc, OrthogonalAlignedRowsClosedForm) {
  const std::size_t n = 5;
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < n; ++i) rows.push_back(basis(n, i));
  const Tensor z = unit_rows(rows);
  const double tau = 0.2;
  const CrossModalLossResult r = cmc_loss(modality(z, {0, 1, 2, 3, 4}), modality(z, {0, 1, 2, 3, 4}), Temperature(tau));
  const double want = -std::log(std::exp(1.0 / tau) / (std::exp(1.0 / tau) + (n - 1.0)));
  EXPECT_NEAR(r.value, want, 1e-12);
  ASSERT_EQ(r.anchors.size(), 2 * n);
}

TEST(Cmc, TwoRowsHandComputation) {
  const Tensor zk = unit_rows({{1, 0}, {0, 1}});
  const Tensor zm = unit_rows({{1, 1}, {-1, 1}});
  const double tau = 0.5, c = 1.0 / std::sqrt(2.0);
  // k->m: anchor 0 pos c, neg -c; anchor 1 pos c, neg c. m->k mirrors.
  auto term = [&](double pos, double neg) { return -std::log(std::exp(pos / tau) / (std::exp(pos / tau) + std::exp(neg / tau))); };
  const double want = (term(c, -c) + term(c, c) + term(c, c) + term(c, -c)) / 4.0;
  EXPECT_NEAR(cmc_loss(modality(zk, {0, 1}), modality(zm, {0, 1}), Temperature(tau)).value, want, 1e-12);
}

TEST(Cmc, MatchesOracleAndRejectsMisalignment) {
  Rng rng(14);
  const Tensor zk = vf::random_unit_rows(12, 8, rng), zm = vf::random_unit_rows(12, 8, rng);
  const std::vector<int> subj{0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2};
  EXPECT_NEAR(cmc_loss(modality(zk, subj), modality(zm, subj), Temperature(0.1)).value,
              vf::oracle_cmc(vf::to_rows(zk), vf::to_rows(zm), 0.1), 1e-12);
  const Tensor short_m = vf::random_unit_rows(11, 8, rng);
  EXPECT_THROW(cmc_loss(modality(zk, subj), modality(short_m, std::vector<int>(11, 0)), Temperature(0.1)), ContractError);
}

TEST(SiCmc, CollapsesToCmcAndMatchesOracle) {
  Rng rng(15);
  const Tensor zk = vf::random_unit_rows(12, 8, rng), zm = vf::random_unit_rows(12, 8, rng);
  const std::vector<int> subj{0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3};
  const auto bk = modality(zk, subj), bm = modality(zm, subj);
  const CrossModalLossResult unit = si_cmc_loss(bk, bm, Temperature(0.1), QMode::kUnit);
  const CrossModalLossResult plain = cmc_loss(bk, bm, Temperature(0.1));
  EXPECT_NEAR(unit.value, plain.value, 1e-12);
  EXPECT_LE(max_abs_diff(unit.grad_k, plain.grad_k), 1e-12);

  std::vector<int> own(12);
  std::iota(own.begin(), own.end(), 0);
  EXPECT_NEAR(si_cmc_loss(modality(zk, own), modality(zm, own), Temperature(0.1)).value, plain.value, 1e-12);

  const auto rk = vf::to_rows(zk), rm = vf::to_rows(zm);
  const auto qkm = vf::oracle_cmc_direction_q(rk, rm, subj, 0.1), qmk = vf::oracle_cmc_direction_q(rm, rk, subj, 0.1);
  EXPECT_NEAR(si_cmc_loss(bk, bm, Temperature(0.1)).value, vf::oracle_si_cmc(rk, rm, subj, 0.1, qkm.q, qmk.q), 1e-12);

  auto other = bm;
  other.subject_ids[0] = 3;
  EXPECT_THROW(si_cmc_loss(bk, other, Temperature(0.1)), ContractError);
}

TEST(Losses, ValuesFiniteAndNonNegative) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const EmbeddingBatch b = random_batch(seed + 100, 16, 8, 3, 3);
    for (double tau : {0.05, 0.1, 1.0}) {
      const Temperature t(tau);
      for (const LossResult& r : {nce_loss(b, t), sicl_loss(b, t), supcon_loss(b, t), si_supcon_loss(b, t)}) {
        EXPECT_TRUE(std::isfinite(r.value));
        EXPECT_GE(r.value, 0.0);
        EXPECT_TRUE(r.grad_z.all_finite());
      }
    }
  }
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  const verify::CheckResult r = verify::check_loss_gradients(20, 77);
  EXPECT_TRUE(r.passed) << r.detail;
  EXPECT_LT(r.measured, 1e-5);
}

TEST(Losses, PermutationEquivariance) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const EmbeddingBatch b = random_batch(seed + 200, 16, 8, 3, 4);
    std::vector<std::size_t> perm(16);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    // Row i of the original goes to position perm[i].
    EmbeddingBatch p = b;
    for (std::size_t i = 0; i < 16; ++i) {
      for (std::size_t k = 0; k < 8; ++k) p.z[perm[i] * 8 + k] = b.z[i * 8 + k];
      p.subject_ids[perm[i]] = b.subject_ids[i];
      p.labels[perm[i]] = b.labels[i];
      p.view_of[perm[i]] = perm[b.view_of[i]];
    }
    const Temperature t(0.1);
    using Fn = LossResult (*)(const EmbeddingBatch&, Temperature);
    const Fn fns[] = {&nce_loss, [](const EmbeddingBatch& x, Temperature tt) { return sicl_loss(x, tt); },
                      &supcon_loss, [](const EmbeddingBatch& x, Temperature tt) { return si_supcon_loss(x, tt); }};
    for (Fn f : fns) {
      const LossResult a = f(b, t), c = f(p, t);
      EXPECT_NEAR(a.value, c.value, 1e-12);
      for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(a.grad_z[i * 8 + k], c.grad_z[perm[i] * 8 + k], 1e-12);
    }
  }
}

TEST(Losses, SharperTemperatureLowersLossWhenPositiveIsNearest) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 300);
    Tensor base = vf::random_unit_rows(8, 16, rng);
    // Second view is a small perturbation of the first, so it is every anchor's nearest candidate.
    std::vector<std::vector<double>> rows;
    const auto b = vf::to_rows(base);
    std::normal_distribution<double> g(0.0, 0.02);
    for (const auto& r : b) {
      rows.push_back(r);
      auto twin = r;
      for (double& v : twin) v += g(rng);
      rows.push_back(twin);
    }
    const EmbeddingBatch batch = EmbeddingBatch::two_view(unit_rows(rows), std::vector<int>(16, 0));
    double previous = INFINITY;
    for (double tau : {1.0, 0.5, 0.1}) {
      const double v = nce_loss(batch, Temperature(tau)).value;
      EXPECT_LE(v, previous + 1e-12) << "tau " << tau;
      previous = v;
    }
  }
}

TEST(Losses, SameSubjectPressureRaisesSiclAboveNce) {
  // Every anchor's same-subject negatives are strictly closer than any
  // cross-subject negative; subject 0 is tighter than subject 1.
  Rng rng(16);
  std::normal_distribution<double> g(0.0, 1.0);
  const std::size_t d = 16;
  std::vector<std::vector<double>> rows;
  std::vector<int> subjects;
  for (int s = 0; s < 2; ++s) {
    const double spread = s == 0 ? 0.15 : 0.45;
    for (int k = 0; k < 4; ++k) {
      std::vector<double> v = basis(d, static_cast<std::size_t>(s));
      for (std::size_t j = 2; j < d; ++j) v[j] = spread * g(rng);
      rows.push_back(v);
      rows.push_back(v);
      subjects.insert(subjects.end(), {s, s});
    }
  }
  const Tensor z = unit_rows(rows);
  const EmbeddingBatch b = EmbeddingBatch::two_view(z, subjects);
  const auto r = vf::to_rows(z);
  for (std::size_t i = 0; i < r.size(); ++i) {
    double worst_same = 1.0, best_other = -1.0;
    for (std::size_t a = 0; a < r.size(); ++a) {
      if (a == i || a == (i ^ 1U)) continue;
      const double c = vf::dot(r[i], r[a]);
      if (subjects[a] == subjects[i]) worst_same = std::min(worst_same, c);
      else best_other = std::max(best_other, c);
    }
    ASSERT_GT(worst_same, best_other);
  }
  const Temperature t(0.1);
  const QWeights w = q_weight(b, t);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_GT(w.p[i], 6.0 / 14.0);  // above the share under uniform similarity
    EXPECT_EQ(w.q[i] > 1.0, subjects[i] == 0);
  }
  EXPECT_GT(sicl_loss(b, t).value, nce_loss(b, t).value);
}

TEST(Losses, AnchorCsvHasOneRowPerAnchor) {
  const LossResult r = sicl_loss(random_batch(17, 8, 4, 2, 2), Temperature(0.1));
  std::ostringstream os;
  write_anchor_csv(os, r.anchors);
  const std::string csv = os.str();
  EXPECT_EQ(csv.rfind("anchor,p,q,loss\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 9);
}

TEST(Losses, OracleEquivalenceAndReductionLattice) {
  const auto eq = verify::check_oracle_equivalence(100, 5);
  EXPECT_TRUE(eq.passed) << eq.detail;
  const auto lattice = verify::check_reduction_lattice(50, 6);
  EXPECT_TRUE(lattice.passed) << lattice.detail;
}

}  // namespace
}  // namespace sicl
