#include <benchmark/benchmark.h>

#include "sicl/model.hpp"
#include "sicl/synthgen.hpp"
#include "sicl/verify/oracles.hpp"

namespace {

using namespace sicl;

constexpr std::size_t kSteps = kWindowSteps;

void BM_EncodeForward(benchmark::State& state) {
  const auto B = static_cast<std::size_t>(state.range(0));
  const EncoderParams p = EncoderParams::init(kInertialChannels, 1);
  Rng rng(2);
  const Tensor x = verify::random_tensor({B, kInertialChannels, kSteps}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(encode_batch(p, x).z.raw());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_EncodeForwardBackward(benchmark::State& state) {
  const auto B = static_cast<std::size_t>(state.range(0));
  const EncoderParams p = EncoderParams::init(kInertialChannels, 1);
  Rng rng(3);
  const Tensor x = verify::random_tensor({B, kInertialChannels, kSteps}, rng);
  const Tensor g = verify::random_tensor({B, kEmbeddingDim}, rng);
  for (auto _ : state) {
    Tape tape;
    const EncoderVars vars = EncoderVars::track(tape, p);
    tape.backward(ad::sum(ad::mul(encode(vars, tape.constant(x)).z, tape.constant(g))));
    benchmark::DoNotOptimize(vars.grads(tape).front().raw());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

BENCHMARK(BM_EncodeForward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EncodeForwardBackward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
