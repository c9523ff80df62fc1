#include <benchmark/benchmark.h>

#include "sicl/losses.hpp"
#include "sicl/verify/oracles.hpp"

namespace {

using namespace sicl;

// Two-view batch of n rows over 4 subjects and 6 classes.
EmbeddingBatch batch(std::size_t n) {
  Rng rng(7);
  std::vector<int> subjects, labels;
  for (std::size_t k = 0; k < n / 2; ++k) {
    const int s = static_cast<int>(k % 4), c = static_cast<int>(k % 6);
    subjects.insert(subjects.end(), {s, s});
    labels.insert(labels.end(), {c, c});
  }
  return EmbeddingBatch::two_view(verify::random_unit_rows(n, kEmbeddingDim, rng), subjects, labels);
}

template <typename Fn>
void run(benchmark::State& state, Fn fn) {
  const EmbeddingBatch b = batch(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fn(b, Temperature(0.1)).value);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Nce(benchmark::State& s) { run(s, [](const auto& b, auto t) { return nce_loss(b, t); }); }
void BM_Sicl(benchmark::State& s) { run(s, [](const auto& b, auto t) { return sicl_loss(b, t); }); }
void BM_SupCon(benchmark::State& s) { run(s, [](const auto& b, auto t) { return supcon_loss(b, t); }); }
void BM_SiSupCon(benchmark::State& s) { run(s, [](const auto& b, auto t) { return si_supcon_loss(b, t); }); }

void BM_SiCmc(benchmark::State& state) {
  const EmbeddingBatch k = batch(static_cast<std::size_t>(state.range(0)));
  EmbeddingBatch m = batch(static_cast<std::size_t>(state.range(0)));
  Rng rng(8);
  m.z = verify::random_unit_rows(m.z.dim(0), kEmbeddingDim, rng);
  for (auto _ : state) benchmark::DoNotOptimize(si_cmc_loss(k, m, Temperature(0.1)).value);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_OracleSicl(benchmark::State& state) {
  const EmbeddingBatch b = batch(static_cast<std::size_t>(state.range(0)));
  const auto rows = verify::to_rows(b.z);
  for (auto _ : state) {
    const auto q = verify::oracle_sicl_q(rows, b.subject_ids, b.view_of, 0.1);
    benchmark::DoNotOptimize(verify::oracle_sicl(rows, b.subject_ids, b.view_of, 0.1, q.q));
  }
}

BENCHMARK(BM_Nce)->Arg(64)->Arg(256);
BENCHMARK(BM_Sicl)->Arg(64)->Arg(256);
BENCHMARK(BM_SupCon)->Arg(64)->Arg(256);
BENCHMARK(BM_SiSupCon)->Arg(64)->Arg(256);
BENCHMARK(BM_SiCmc)->Arg(64)->Arg(256);
BENCHMARK(BM_OracleSicl)->Arg(64);

}  // namespace
