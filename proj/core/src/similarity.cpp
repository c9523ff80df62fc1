#include <algorithm>
#include <cmath>
#include <map>

#include "sicl/errors.hpp"
#include "sicl/harness.hpp"
#include "sicl/rng.hpp"

namespace sicl {
namespace {

constexpr std::size_t kBins = 50;

struct Population {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  std::vector<std::size_t> hist = std::vector<std::size_t>(kBins, 0);

  void add(double c) {
    sum += c;
    sq += c * c;
    ++n;
    const double u = (std::clamp(c, -1.0, 1.0) + 1.0) / 2.0;
    hist[std::min(kBins - 1, static_cast<std::size_t>(u * kBins))] += 1;
  }
  double mean() const { return sum / static_cast<double>(n); }
  double stddev() const {
    const double m = mean();
    return std::sqrt(std::max(0.0, sq / static_cast<double>(n) - m * m));
  }
};

double cosine(const Tensor& z, std::size_t i, std::size_t j) {
  const std::size_t d = z.dim(1);
  double dot = 0.0;
  for (std::size_t k = 0; k < d; ++k) dot += z[i * d + k] * z[j * d + k];
  return dot;
}

}  // namespace

SimStats similarity_stats(const Tensor& z, const std::vector<int>& subject_ids, std::uint64_t seed,
                          std::size_t max_pairs) {
  if (z.rank() != 2 || z.dim(0) != subject_ids.size()) {
    throw ShapeError("similarity_stats: embeddings and subject ids disagree");
  }
  const std::size_t n = z.dim(0);
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) members[subject_ids[i]].push_back(i);

  std::vector<std::size_t> subject_pairs;
  std::vector<const std::vector<std::size_t>*> groups;
  std::size_t intra_total = 0;
  for (const auto& [s, idx] : members) {
    const std::size_t p = idx.size() * (idx.size() - 1) / 2;
    if (p == 0) continue;
    groups.push_back(&idx);
    subject_pairs.push_back(intra_total += p);
  }
  if (intra_total == 0) {
    throw ContractError("similarity analysis needs at least two windows of some subject");
  }
  if (max_pairs == 0) throw ContractError("similarity analysis needs a positive pair budget");

  Rng rng(derive_seed(seed, "pairs"));
  Population all, intra;
  const std::size_t all_total = n * (n - 1) / 2;
  if (all_total <= max_pairs) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) all.add(cosine(z, i, j));
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    while (all.n < max_pairs) {
      const std::size_t i = pick(rng), j = pick(rng);
      if (i != j) all.add(cosine(z, i, j));
    }
  }
  if (intra_total <= max_pairs) {
    for (const auto* idx : groups)
      for (std::size_t a = 0; a < idx->size(); ++a)
        for (std::size_t b = a + 1; b < idx->size(); ++b) intra.add(cosine(z, (*idx)[a], (*idx)[b]));
  } else {
    std::uniform_int_distribution<std::size_t> pick_pair(0, intra_total - 1);
    while (intra.n < max_pairs) {
      const std::size_t k = pick_pair(rng);
      const auto g = static_cast<std::size_t>(
          std::upper_bound(subject_pairs.begin(), subject_pairs.end(), k) - subject_pairs.begin());
      const auto& idx = *groups[g];
      std::uniform_int_distribution<std::size_t> member(0, idx.size() - 1);
      const std::size_t a = member(rng), b = member(rng);
      if (a != b) intra.add(cosine(z, idx[a], idx[b]));
    }
  }

  SimStats s;
  s.mean_all = all.mean();
  s.std_all = all.stddev();
  s.mean_intra_subject = intra.mean();
  s.std_intra_subject = intra.stddev();
  s.gap = std::abs(s.mean_all - s.mean_intra_subject);
  s.pairs_all = all.n;
  s.pairs_intra_subject = intra.n;
  for (std::size_t b = 0; b <= kBins; ++b) {
    s.bin_edges.push_back(-1.0 + 2.0 * static_cast<double>(b) / static_cast<double>(kBins));
  }
  s.hist_all = all.hist;
  s.hist_intra_subject = intra.hist;
  return s;
}

SimStats analyze_similarities(const EncoderParams& encoder, const std::vector<SensorWindow>& windows,
                              std::uint64_t seed, std::size_t max_pairs) {
  if (windows.empty()) throw ContractError("similarity analysis on an empty window set");
  constexpr std::size_t kChunk = 128;
  Tensor z({windows.size(), kEmbeddingDim});
  std::vector<int> subjects;
  for (std::size_t start = 0; start < windows.size(); start += kChunk) {
    const std::size_t stop = std::min(windows.size(), start + kChunk);
    std::vector<const SensorWindow*> chunk;
    for (std::size_t i = start; i < stop; ++i) chunk.push_back(&windows[i]);
    const Encoding enc = encode_batch(encoder, stack_windows(chunk));
    std::copy(enc.z.data().begin(), enc.z.data().end(), z.raw() + start * kEmbeddingDim);
  }
  for (const auto& w : windows) subjects.push_back(w.subject_id);
  return similarity_stats(z, subjects, seed, max_pairs);
}

}  // namespace sicl
