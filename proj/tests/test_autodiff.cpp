#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "sicl/autodiff.hpp"
#include "sicl/errors.hpp"
#include "sicl/verify/oracles.hpp"

namespace sicl {
namespace {

using Graph = std::function<Var(Tape&, const std::vector<Var>&)>;

double scalar_of(Var out, Tape& tape, const Tensor& projection) {
  if (out.value().size() == 1) return out.value().item();
  return ad::sum(ad::mul(out, tape.constant(projection))).value().item();
}

/// Worst normwise relative error between tape gradients and central
/// differences of the same graph re-run on perturbed inputs. Non-scalar
/// outputs are reduced by a fixed random projection.
double gradient_error(const Graph& graph, const std::vector<Tensor>& inputs, Rng& rng) {
  Tensor projection;
  {
    Tape probe;
    std::vector<Var> leaves;
    for (const auto& t : inputs) leaves.push_back(probe.leaf(t));
    projection = verify::random_tensor(graph(probe, leaves).value().shape(), rng);
  }
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t));
  Var out = graph(tape, leaves);
  const Var root = out.value().size() == 1 ? out : ad::sum(ad::mul(out, tape.constant(projection)));
  tape.backward(root);

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto f = [&](const Tensor& x) {
      Tape t;
      std::vector<Var> ls;
      for (std::size_t j = 0; j < inputs.size(); ++j) ls.push_back(t.leaf(j == k ? x : inputs[j]));
      return scalar_of(graph(t, ls), t, projection);
    };
    const Tensor numeric = verify::finite_difference(f, inputs[k], 1e-6);
    const auto analytic = tape.grad(leaves[k]);
    const Tensor zero(inputs[k].shape());
    worst = std::max(worst, verify::relative_error(analytic ? *analytic : zero, numeric));
  }
  return worst;
}

struct OpCase {
  const char* name;
  std::function<std::vector<Tensor>(Rng&)> inputs;
  Graph graph;
};

Tensor positive(Shape s, Rng& rng) {
  Tensor t = verify::random_tensor(std::move(s), rng);
  for (double& v : t.data()) v = 0.5 + std::abs(v);
  return t;
}

std::vector<OpCase> op_cases() {
  using V = const std::vector<Var>&;
  auto mat = [](Shape s) { return [s](Rng& r) { return std::vector<Tensor>{verify::random_tensor(s, r)}; }; };
  auto two = [](Shape a, Shape b) {
    return [a, b](Rng& r) { return std::vector<Tensor>{verify::random_tensor(a, r), verify::random_tensor(b, r)}; };
  };
  static const int labels[] = {0, 2, 1, 2};
  return {
      {"add", two({3, 4}, {3, 4}), [](Tape&, V v) { return ad::add(v[0], v[1]); }},
      {"sub", two({3, 4}, {3, 4}), [](Tape&, V v) { return ad::sub(v[0], v[1]); }},
      {"mul", two({3, 4}, {3, 4}), [](Tape&, V v) { return ad::mul(v[0], v[1]); }},
      {"scale", mat({3, 4}), [](Tape&, V v) { return ad::scale(v[0], -2.5); }},
      {"add_bias_cols", two({3, 4}, {4}), [](Tape&, V v) { return ad::add_bias(v[0], v[1], 1); }},
      {"add_bias_rows", two({3, 4}, {3}), [](Tape&, V v) { return ad::add_bias(v[0], v[1], 0); }},
      {"add_bias_channels", two({2, 3, 5}, {3}), [](Tape&, V v) { return ad::add_bias(v[0], v[1], 1); }},
      {"relu", mat({4, 5}), [](Tape&, V v) { return ad::relu(v[0]); }},
      {"exp", mat({3, 4}), [](Tape&, V v) { return ad::exp(v[0]); }},
      {"log", [](Rng& r) { return std::vector<Tensor>{positive({3, 4}, r)}; },
       [](Tape&, V v) { return ad::log(v[0]); }},
      {"matmul", two({3, 5}, {5, 2}), [](Tape&, V v) { return ad::matmul(v[0], v[1]); }},
      {"transpose", mat({3, 5}), [](Tape&, V v) { return ad::transpose(v[0]); }},
      {"reshape", mat({3, 4}), [](Tape&, V v) { return ad::reshape(v[0], {2, 6}); }},
      {"conv1d", two({3, 12}, {4, 3, 5}), [](Tape&, V v) { return ad::conv1d(v[0], v[1]); }},
      {"conv1d_stride2", two({2, 13}, {3, 2, 3}), [](Tape&, V v) { return ad::conv1d(v[0], v[1], 2); }},
      {"conv1d_batched", two({2, 3, 12}, {4, 3, 5}), [](Tape&, V v) { return ad::conv1d(v[0], v[1]); }},
      {"softmax_rows", mat({3, 5}), [](Tape&, V v) { return ad::softmax(v[0], 1); }},
      {"softmax_cols", mat({3, 5}), [](Tape&, V v) { return ad::softmax(v[0], 0); }},
      {"sum", mat({3, 4}), [](Tape&, V v) { return ad::sum(v[0]); }},
      {"sum_axis0", mat({3, 4}), [](Tape&, V v) { return ad::sum(v[0], 0); }},
      {"sum_axis1", mat({3, 4}), [](Tape&, V v) { return ad::sum(v[0], 1); }},
      {"mean", mat({3, 4}), [](Tape&, V v) { return ad::mean(v[0]); }},
      {"l2_normalize", mat({4, 6}), [](Tape&, V v) { return ad::l2_normalize(v[0], 1); }},
      {"l2_normalize_axis0", mat({4, 6}), [](Tape&, V v) { return ad::l2_normalize(v[0], 0); }},
      {"global_avg_pool", mat({2, 3, 7}), [](Tape&, V v) { return ad::global_avg_pool(v[0]); }},
      {"cross_entropy", mat({4, 3}), [](Tape&, V v) { return ad::cross_entropy(v[0], labels); }},
  };
}

TEST(Backward, SquareAtThree) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(3.0));
  tape.backward(ad::mul(x, x));
  EXPECT_DOUBLE_EQ(tape.grad(x)->item(), 6.0);
}

TEST(Backward, ReluGate) {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector({-1.0, 2.0}));
  tape.backward(ad::sum(ad::relu(x)));
  EXPECT_EQ(*tape.grad(x), Tensor::vector({0.0, 1.0}));
}

TEST(Backward, NonScalarRootIsContractError) {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(tape.backward(ad::relu(x)), ContractError);
}

TEST(Backward, UntrackedInputsGetNoGradient) {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector({1.0, 2.0}));
  const Var c = tape.constant(Tensor::vector({3.0, 4.0}));
  tape.backward(ad::sum(ad::mul(x, c)));
  EXPECT_EQ(*tape.grad(x), Tensor::vector({3.0, 4.0}));
  EXPECT_FALSE(tape.grad(c).has_value());
}

TEST(Backward, VisitsEachNodeOnceInTopologicalOrder) {
  Tape tape;
  const Var x = tape.leaf(Tensor::vector({0.5, -1.5, 2.0}));
  // Diamond: x feeds two branches that rejoin.
  const Var a = ad::exp(x);
  const Var b = ad::relu(x);
  const Var root = ad::sum(ad::add(ad::mul(a, b), a));
  for (std::size_t id = 0; id < tape.size(); ++id)
    for (std::size_t in : tape.inputs(id)) EXPECT_LT(in, id);
  tape.backward(root);
  EXPECT_EQ(tape.last_visit_count(), tape.size() - 1);  // every op node, leaves excluded
  const Tensor g = *tape.grad(x);
  for (std::size_t i = 0; i < 3; ++i) {
    const double xi = x.value()[i];
    const double want = std::exp(xi) * std::max(xi, 0.0) + std::exp(xi) * (xi > 0 ? 1.0 : 0.0) + std::exp(xi);
    EXPECT_NEAR(g[i], want, 1e-12);
  }
}

TEST(Backward, RepeatedSweepsDoNotAccumulate) {
  Tape tape;
  const Var x = tape.leaf(Tensor::scalar(2.0));
  const Var y = ad::mul(x, x);
  tape.backward(y);
  tape.backward(y);
  EXPECT_DOUBLE_EQ(tape.grad(x)->item(), 4.0);
}

class OpGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpGradient, MatchesFiniteDifferencesOnTwentySeeds) {
  const OpCase op = op_cases()[GetParam()];
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(seed, op.name));
    worst = std::max(worst, gradient_error(op.graph, op.inputs(rng), rng));
  }
  EXPECT_LT(worst, 1e-4) << op.name;
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Range<std::size_t>(0, op_cases().size()),
                         [](const auto& info) { return std::string(op_cases()[info.param].name); });

// Random compositions of shape-preserving primitives on [3 x 4] leaves.
TEST(Backward, RandomGraphsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(derive_seed(seed, "graph"));
    std::uniform_int_distribution<int> pick_op(0, 9), depth(2, 8);
    std::vector<int> recipe(static_cast<std::size_t>(depth(rng)));
    for (int& r : recipe) r = pick_op(rng);
    const Graph graph = [recipe](Tape&, const std::vector<Var>& in) {
      std::vector<Var> pool(in.begin(), in.end());
      Var cur = in[0];
      std::size_t turn = 0;
      for (int r : recipe) {
        const Var other = pool[turn++ % pool.size()];
        switch (r) {
          case 0: cur = ad::add(cur, other); break;
          case 1: cur = ad::mul(cur, other); break;
          case 2: cur = ad::sub(cur, ad::scale(other, 0.5)); break;
          case 3: cur = ad::relu(cur); break;
          case 4: cur = ad::exp(ad::scale(cur, 0.3)); break;
          case 5: cur = ad::softmax(cur, 1); break;
          case 6: cur = ad::l2_normalize(cur, 1); break;
          case 7: cur = ad::matmul(cur, ad::reshape(ad::transpose(in[1]), {4, 3})); cur = ad::matmul(cur, in[1]); break;
          case 8: cur = ad::transpose(ad::transpose(cur)); break;
          default: cur = ad::log(ad::add(ad::exp(cur), ad::exp(other))); break;
        }
        pool.push_back(cur);
      }
      // Non-scalar output: the checker projects it onto a random direction, which
      // avoids a structurally zero gradient when the last op is a softmax.
      return cur;
    };
    const std::vector<Tensor> inputs{verify::random_tensor({3, 4}, rng), verify::random_tensor({3, 4}, rng)};
    EXPECT_LT(gradient_error(graph, inputs, rng), 1e-4) << "seed " << seed;
  }
}

}  // namespace
}  // namespace sicl
