#include <gtest/gtest.h>

#include <cmath>

#include "sicl/verify/oracles.hpp"
#include "sicl/verify/suite.hpp"

namespace sicl::verify {
namespace {

TEST(Oracles, MatmulAndConvOnHandExamples) {
  const Tensor a({2, 2}, {1, 2, 3, 4}), b({2, 1}, {5, 6});
  const Tensor c = matmul(a, b);
  EXPECT_EQ(c[0], 17.0);
  EXPECT_EQ(c[1], 39.0);

  const Tensor x({1, 4}, {1, 2, 3, 4}), w({1, 1, 3}, {1, 0, 0});
  const Tensor y = conv1d(x, w, 1);
  ASSERT_EQ(y.size(), 2u);
  EXPECT_EQ(y[0], 1.0);
  EXPECT_EQ(y[1], 2.0);
}

TEST(Oracles, NceOnIdenticalRowsIsLogThree) {
  const Rows z(4, {0.0, 1.0});
  const std::vector<std::size_t> view{1, 0, 3, 2};
  EXPECT_NEAR(oracle_nce(z, view, 0.3), std::log(3.0), 1e-15);
}

TEST(Oracles, FiniteDifferenceOfQuadratic) {
  const Tensor x({3}, {1.0, -2.0, 0.5});
  const Tensor g = finite_difference(
      [](const Tensor& t) {
        double s = 0.0;
        for (double v : t.data()) s += v * v;
        return s;
      },
      x, 1e-6);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g[i], 2.0 * x[i], 1e-8);
}

TEST(Oracles, RelativeErrorIsSymmetricAndScaleFree) {
  Rng rng(1);
  const Tensor a = random_tensor({10}, rng), b = random_tensor({10}, rng);
  EXPECT_DOUBLE_EQ(relative_error(a, b), relative_error(b, a));
  EXPECT_EQ(relative_error(a, a), 0.0);
  Tensor a3 = a, b3 = b;
  for (double& v : a3.data()) v *= 1e3;
  for (double& v : b3.data()) v *= 1e3;
  EXPECT_NEAR(relative_error(a3, b3), relative_error(a, b), 1e-12);
}

TEST(Oracles, RandomUnitRowsAreUnitNorm) {
  Rng rng(2);
  for (const auto& r : to_rows(random_unit_rows(20, 7, rng))) EXPECT_NEAR(dot(r, r), 1.0, 1e-14);
}

TEST(Suite, EveryCheckPasses) {
  for (const CheckResult& r : run_verify()) {
    EXPECT_TRUE(r.passed) << r.name << ": measured " << r.measured << " vs " << r.tolerance << " " << r.detail;
  }
}

}  // namespace
}  // namespace sicl::verify
