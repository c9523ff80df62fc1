#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sicl/tensor.hpp"

namespace sicl {

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
};

/// Define-by-run record of tensor operations. Nodes are appended in execution
/// order, so every node's inputs precede it and a single reverse sweep is a
/// valid topological traversal. A Tape is rebuilt for every forward pass.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t node)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Tracked input: receives a gradient in backward().
  Var leaf(Tensor value);
  /// Untracked input: never receives a gradient.
  Var constant(Tensor value);

  /// Appends an op node. `backward` is dropped when no input is tracked.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  /// Reverse sweep from a scalar root. Gradients from earlier sweeps are cleared.
  void backward(Var root);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  std::span<const std::size_t> inputs(std::size_t id) const { return nodes_[id].inputs; }
  bool tracked(std::size_t id) const { return nodes_[id].tracked; }

  /// Gradient of the last backward root w.r.t. node `v`; nullopt for untracked
  /// nodes or nodes the root does not depend on.
  std::optional<Tensor> grad(Var v) const;

  /// Accumulation target for op adjoints; zero-initialized on first access.
  Tensor& grad_slot(std::size_t id);
  const Tensor* grad_if_present(std::size_t id) const;

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Number of nodes whose adjoint ran during the most recent backward().
  std::size_t last_visit_count() const noexcept { return visits_; }

 private:
  struct Node {
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool tracked = false;
  };

  std::vector<Node> nodes_;
  std::vector<std::optional<Tensor>> grads_;
  std::size_t visits_ = 0;
};

// Tape-recording counterparts of sicl::ops. All operands must live on the same tape.
namespace ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_bias(Var x, Var bias, std::size_t axis);
Var relu(Var x);
Var exp(Var x);
Var log(Var x);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var x, Shape shape);
Var conv1d(Var x, Var w, std::size_t stride = 1);
Var softmax(Var x, std::size_t axis);
Var sum(Var x);
Var sum(Var x, std::size_t axis);
Var mean(Var x);
Var l2_normalize(Var x, std::size_t axis);
Var global_avg_pool(Var x);
Var cross_entropy(Var logits, std::span<const int> labels);

}  // namespace ad
}  // namespace sicl
