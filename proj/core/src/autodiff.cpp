#include "sicl/autodiff.hpp"

#include <cmath>

#include "kernels.hpp"
#include "sicl/errors.hpp"
#include "sicl/ops.hpp"

namespace sicl {

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true});
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  bool tracked = false;
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) throw ContractError("tape input refers to a later node");
    tracked = tracked || nodes_[in].tracked;
  }
  if (!tracked) backward = nullptr;
  nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward), tracked});
  return Var{this, nodes_.size() - 1};
}

void Tape::backward(Var root) {
  if (root.tape != this || root.id >= nodes_.size()) throw ContractError("backward: foreign root");
  if (nodes_[root.id].value.size() != 1) {
    throw ContractError("backward: root must be scalar, got " +
                        shape_string(nodes_[root.id].value.shape()));
  }
  grads_.assign(nodes_.size(), std::nullopt);
  visits_ = 0;
  grads_[root.id] = Tensor::full(nodes_[root.id].value.shape(), 1.0);
  for (std::size_t i = root.id + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!node.tracked || !grads_[i] || !node.backward) continue;
    node.backward(*this, i);
    ++visits_;
  }
}

std::optional<Tensor> Tape::grad(Var v) const {
  if (v.id >= grads_.size() || !nodes_[v.id].tracked) return std::nullopt;
  return grads_[v.id];
}

Tensor& Tape::grad_slot(std::size_t id) {
  auto& slot = grads_[id];
  if (!slot) slot = Tensor(nodes_[id].value.shape());
  return *slot;
}

const Tensor* Tape::grad_if_present(std::size_t id) const {
  if (id >= grads_.size() || !grads_[id]) return nullptr;
  return &*grads_[id];
}

namespace ad {
namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw ContractError("operands live on different tapes");
  return *a.tape;
}

// Runs `f(grad_slot)` only when input `k` of `node` is tracked.
template <typename F>
void with_input_grad(Tape& tape, std::size_t node, std::size_t k, F f) {
  const std::size_t in = tape.inputs(node)[k];
  if (tape.tracked(in)) f(tape.grad_slot(in), tape.value(in));
}

void accumulate(Tensor& dst, const Tensor& src, double factor = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
}

}  // namespace

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  return tape.record(ops::add(a.value(), b.value()), {a.id, b.id}, [](Tape& t, std::size_t n) {
    const Tensor& g = *t.grad_if_present(n);
    with_input_grad(t, n, 0, [&](Tensor& ga, const Tensor&) { accumulate(ga, g); });
    with_input_grad(t, n, 1, [&](Tensor& gb, const Tensor&) { accumulate(gb, g); });
  });
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  return tape.record(ops::sub(a.value(), b.value()), {a.id, b.id}, [](Tape& t, std::size_t n) {
    const Tensor& g = *t.grad_if_present(n);
    with_input_grad(t, n, 0, [&](Tensor& ga, const Tensor&) { accumulate(ga, g); });
    with_input_grad(t, n, 1, [&](Tensor& gb, const Tensor&) { accumulate(gb, g, -1.0); });
  });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  return tape.record(ops::mul(a.value(), b.value()), {a.id, b.id}, [](Tape& t, std::size_t n) {
    const Tensor& g = *t.grad_if_present(n);
    const Tensor& av = t.value(t.inputs(n)[0]);
    const Tensor& bv = t.value(t.inputs(n)[1]);
    with_input_grad(t, n, 0, [&](Tensor& ga, const Tensor&) {
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
    });
    with_input_grad(t, n, 1, [&](Tensor& gb, const Tensor&) {
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
    });
  });
}

Var scale(Var a, double factor) {
  return a.tape->record(ops::scale(a.value(), factor), {a.id}, [factor](Tape& t, std::size_t n) {
    const Tensor& g = *t.grad_if_present(n);
    with_input_grad(t, n, 0, [&](Tensor& ga, const Tensor&) { accumulate(ga, g, factor); });
  });
}

Var add_bias(Var x, Var bias, std::size_t axis) {
  Tape& tape = same_tape(x, bias);
  return tape.record(ops::add_bias(x.value(), bias.value(), axis), {x.id, bias.id},
                     [axis](Tape& t, std::size_t n) {
                       const Tensor& g = *t.grad_if_present(n);
                       with_input_grad(t, n, 0, [&](Tensor& gx, const Tensor&) { accumulate(gx, g); });
                       with_input_grad(t, n, 1, [&](Tensor& gb, const Tensor&) {
                         const auto l = kernels::lanes_of(g.shape(), axis);
                         for (std::size_t o = 0; o < l.outer; ++o)
                           for (std::size_t k = 0; k < l.extent; ++k) {
                             const double* lane = g.raw() + (o * l.extent + k) * l.inner;
                             double s = 0.0;
                             for (std::size_t i = 0; i < l.inner; ++i) s += lane[i];
                             gb[k] += s;
                           }
                       });
                     });
}

Var relu(Var x) {
  return x.tape->record(ops::relu(x.value()), {x.id}, [](Tape& t, std::size_t n) {
    const Tensor& g = *t.grad_if_present(n);
    with_input_grad(t, n, 0, [&](Tensor& gx, const Tensor& xv) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += xv[i] > 0.0 ? g[i] : 0.0;
    });
  });
}

Var exp(Var x) {
  return x.tape->record(ops::exp(x.value()), {x.id}, [](Tape& t, std::size_t n) {
    const Tensor& g = *t.grad_if_present(n);
    const Tensor& y = t.value(n);
    with_input_grad(t, n, 0, [&](Tensor& gx, const Tensor&) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * y[i];
    });
  });
}

Var log(Var x) {
  return x.tape->record(ops::log(x.value()), {x.id}, [](Tape& t, std::size_t n) {
    const Tensor& g = *t.grad_if_present(n);
    with_input_grad(t, n, 0, [&](Tensor& gx, const Tensor& xv) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] / xv[i];
    });
  });
}

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  return tape.record(ops::matmul(a.value(), b.value()), {a.id, b.id}, [](Tape& t, std::size_t n) {
    const Tensor& g = *t.grad_if_present(n);
    const Tensor& av = t.value(t.inputs(n)[0]);
    const Tensor& bv = t.value(t.inputs(n)[1]);
    const std::size_t m = av.dim(0), k = av.dim(1), cols = bv.dim(1);
    with_input_grad(t, n, 0, [&](Tensor& ga, const Tensor&) {
      kernels::gemm_nt(m, cols, k, g.raw(), bv.raw(), ga.raw());
    });
    with_input_grad(t, n, 1, [&](Tensor& gb, const Tensor&) {
      kernels::gemm_tn(m, k, cols, av.raw(), g.raw(), gb.raw());
    });
  });
}

Var transpose(Var a) {
  return a.tape->record(ops::transpose(a.value()), {a.id}, [](Tape& t, std::size_t n) {
    const Tensor& g = *t.grad_if_present(n);
    with_input_grad(t, n, 0, [&](Tensor& ga, const Tensor&) { accumulate(ga, ops::transpose(g)); });
  });
}

Var reshape(Var x, Shape shape) {
  return x.tape->record(x.value().reshaped(std::move(shape)), {x.id}, [](Tape& t, std::size_t n) {
    const Tensor& g = *t.grad_if_present(n);
    with_input_grad(t, n, 0, [&](Tensor& gx, const Tensor&) {
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    });
  });
}

Var conv1d(Var x, Var w, std::size_t stride) {
  Tape& tape = same_tape(x, w);
  return tape.record(ops::conv1d(x.value(), w.value(), stride), {x.id, w.id},
                     [stride](Tape& t, std::size_t n) {
                       const Tensor& g = *t.grad_if_present(n);
                       const std::size_t xi = t.inputs(n)[0], wi = t.inputs(n)[1];
                       const Tensor& xv = t.value(xi);
                       const Tensor& wv = t.value(wi);
                       const bool batched = xv.rank() == 3;
                       const kernels::ConvDims d{batched ? xv.dim(0) : 1,
                                                 xv.dim(batched ? 1 : 0),
                                                 xv.dim(batched ? 2 : 1),
                                                 wv.dim(0),
                                                 wv.dim(2),
                                                 stride,
                                                 g.shape().back()};
                       double* dx = t.tracked(xi) ? t.grad_slot(xi).raw() : nullptr;
                       double* dw = t.tracked(wi) ? t.grad_slot(wi).raw() : nullptr;
                       kernels::conv1d_backward(d, xv.raw(), wv.raw(), g.raw(), dx, dw);
                     });
}

Var softmax(Var x, std::size_t axis) {
  return x.tape->record(ops::softmax(x.value(), axis), {x.id}, [axis](Tape& t, std::size_t n) {
    const Tensor& g = *t.grad_if_present(n);
    const Tensor& y = t.value(n);
    with_input_grad(t, n, 0, [&](Tensor& gx, const Tensor&) {
      const auto l = kernels::lanes_of(y.shape(), axis);
      for (std::size_t o = 0; o < l.outer; ++o)
        for (std::size_t i = 0; i < l.inner; ++i) {
          const std::size_t base = o * l.extent * l.inner + i;
          double dot = 0.0;
          for (std::size_t k = 0; k < l.extent; ++k) dot += g[base + k * l.inner] * y[base + k * l.inner];
          for (std::size_t k = 0; k < l.extent; ++k) {
            const std::size_t idx = base + k * l.inner;
            gx[idx] += y[idx] * (g[idx] - dot);
          }
        }
    });
  });
}

Var sum(Var x) {
  return x.tape->record(ops::sum(x.value()), {x.id}, [](Tape& t, std::size_t n) {
    const double g = t.grad_if_present(n)->item();
    with_input_grad(t, n, 0, [&](Tensor& gx, const Tensor&) {
      for (double& v : gx.data()) v += g;
    });
  });
}

Var sum(Var x, std::size_t axis) {
  return x.tape->record(ops::sum(x.value(), axis), {x.id}, [axis](Tape& t, std::size_t n) {
    const Tensor& g = *t.grad_if_present(n);
    with_input_grad(t, n, 0, [&](Tensor& gx, const Tensor&) {
      const auto l = kernels::lanes_of(gx.shape(), axis);
      for (std::size_t o = 0; o < l.outer; ++o)
        for (std::size_t k = 0; k < l.extent; ++k)
          for (std::size_t i = 0; i < l.inner; ++i)
            gx[(o * l.extent + k) * l.inner + i] += g[o * l.inner + i];
    });
  });
}

Var mean(Var x) {
  return x.tape->record(ops::mean(x.value()), {x.id}, [](Tape& t, std::size_t n) {
    const double g = t.grad_if_present(n)->item();
    with_input_grad(t, n, 0, [&](Tensor& gx, const Tensor&) {
      const double share = g / static_cast<double>(gx.size());
      for (double& v : gx.data()) v += share;
    });
  });
}

Var l2_normalize(Var x, std::size_t axis) {
  return x.tape->record(ops::l2_normalize(x.value(), axis), {x.id}, [axis](Tape& t, std::size_t n) {
    const Tensor& g = *t.grad_if_present(n);
    const Tensor& y = t.value(n);
    with_input_grad(t, n, 0, [&](Tensor& gx, const Tensor& xv) {
      const auto l = kernels::lanes_of(y.shape(), axis);
      for (std::size_t o = 0; o < l.outer; ++o)
        for (std::size_t i = 0; i < l.inner; ++i) {
          const std::size_t base = o * l.extent * l.inner + i;
          double sq = 0.0, dot = 0.0;
          for (std::size_t k = 0; k < l.extent; ++k) {
            const std::size_t idx = base + k * l.inner;
            sq += xv[idx] * xv[idx];
            dot += y[idx] * g[idx];
          }
          const double inv = 1.0 / std::sqrt(sq);
          for (std::size_t k = 0; k < l.extent; ++k) {
            const std::size_t idx = base + k * l.inner;
            gx[idx] += (g[idx] - y[idx] * dot) * inv;
          }
        }
    });
  });
}

Var global_avg_pool(Var x) {
  return x.tape->record(ops::global_avg_pool(x.value()), {x.id}, [](Tape& t, std::size_t n) {
    const Tensor& g = *t.grad_if_present(n);
    with_input_grad(t, n, 0, [&](Tensor& gx, const Tensor&) {
      const std::size_t T = gx.shape().back();
      const double inv = 1.0 / static_cast<double>(T);
      for (std::size_t lane = 0; lane < g.size(); ++lane) {
        double* row = gx.raw() + lane * T;
        const double share = g[lane] * inv;
        for (std::size_t s = 0; s < T; ++s) row[s] += share;
      }
    });
  });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  std::vector<int> owned(labels.begin(), labels.end());
  const double value = ops::cross_entropy(logits.value(), owned);
  return logits.tape->record(
      Tensor::scalar(value), {logits.id}, [owned = std::move(owned)](Tape& t, std::size_t n) {
        const double g = t.grad_if_present(n)->item();
        with_input_grad(t, n, 0, [&](Tensor& gl, const Tensor& lv) {
          const Tensor p = ops::softmax(lv, 1);
          const std::size_t B = lv.dim(0), K = lv.dim(1);
          const double inv = g / static_cast<double>(B);
          for (std::size_t r = 0; r < B; ++r)
            for (std::size_t k = 0; k < K; ++k) {
              const double target = static_cast<int>(k) == owned[r] ? 1.0 : 0.0;
              gl[r * K + k] += (p[r * K + k] - target) * inv;
            }
        });
      });
}

}  // namespace ad
}  // namespace sicl
