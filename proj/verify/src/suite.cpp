#include "sicl/verify/suite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <unistd.h>

#include "sicl/dataset_io.hpp"
#include "sicl/losses.hpp"
#include "sicl/model.hpp"
#include "sicl/ops.hpp"
#include "sicl/verify/oracles.hpp"

namespace sicl::verify {
namespace {

constexpr double kEps = 1e-6;
constexpr std::size_t kCoordsPerTensor = 256;
constexpr double kReluMargin = 1e-5;

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::size_t pick(Rng& rng, std::initializer_list<std::size_t> options) {
  std::uniform_int_distribution<std::size_t> d(0, options.size() - 1);
  return *(options.begin() + d(rng));
}

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

struct RandomBatch {
  Tensor z;
  Tensor zm;  // second modality, same shape
  std::vector<int> subjects;
  std::vector<int> labels;  // constant within a pair; every class has >= 2 rows
  std::vector<int> row_subjects;  // independent per-row subjects for the cross-modal losses
  double tau = 0.1;
};

RandomBatch random_batch(Rng& rng, std::size_t n, std::size_t d) {
  RandomBatch b;
  b.z = random_unit_rows(n, d, rng);
  b.zm = random_unit_rows(n, d, rng);
  const int subjects = uniform_int(rng, 2, 6);
  const int classes = uniform_int(rng, 2, 6);
  std::vector<int> pair_labels(n / 2);
  for (std::size_t k = 0; k < pair_labels.size(); ++k) pair_labels[k] = static_cast<int>(k) % classes;
  std::shuffle(pair_labels.begin(), pair_labels.end(), rng);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const int s = uniform_int(rng, 0, subjects - 1);
    b.subjects.insert(b.subjects.end(), {s, s});
    b.labels.insert(b.labels.end(), {pair_labels[k], pair_labels[k]});
  }
  for (std::size_t i = 0; i < n; ++i) b.row_subjects.push_back(uniform_int(rng, 0, subjects - 1));
  b.tau = std::array{0.07, 0.1, 0.5, 1.0}[uniform_int(rng, 0, 3)];
  return b;
}

std::vector<std::size_t> pairing(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i ^ 1U;
  return v;
}

EmbeddingBatch cross_batch(const Tensor& z, const std::vector<int>& subjects) {
  EmbeddingBatch b;
  b.z = z;
  b.subject_ids = subjects;
  return b;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  Tensor out({a.dim(0) + b.dim(0), a.dim(1)});
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

std::pair<Tensor, Tensor> split_rows(const Tensor& t) {
  const std::size_t half = t.dim(0) / 2, d = t.dim(1);
  Tensor a({half, d}), b({half, d});
  std::copy_n(t.data().begin(), a.size(), a.data().begin());
  std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(a.size()), b.size(), b.data().begin());
  return {a, b};
}

std::string fmt_err(const char* label, double v) {
  std::ostringstream os;
  os << label << '=' << v;
  return os.str();
}

}  // namespace

CheckResult check_oracle_equivalence(int batches, std::uint64_t seed) {
  Timer timer;
  CheckResult r;
  r.name = "oracle_equivalence";
  r.tolerance = 1e-10;
  Rng rng(derive_seed(seed, "oracle"));
  double worst[6] = {};
  for (int b = 0; b < batches; ++b) {
    const std::size_t n = pick(rng, {8, 16, 32});
    const std::size_t d = pick(rng, {4, 8, 32});
    const RandomBatch rb = random_batch(rng, n, d);
    const Temperature tau(rb.tau);
    const Rows rows = to_rows(rb.z), rows_m = to_rows(rb.zm);
    const auto view = pairing(n);

    const EmbeddingBatch two = EmbeddingBatch::two_view(rb.z, rb.subjects, rb.labels);
    worst[0] = std::max(worst[0], std::abs(nce_loss(two, tau).value - oracle_nce(rows, view, rb.tau)));

    const OracleQ q1 = oracle_sicl_q(rows, rb.subjects, view, rb.tau);
    const LossResult s1 = sicl_loss(two, tau);
    double e = std::abs(s1.value - oracle_sicl(rows, rb.subjects, view, rb.tau, q1.q));
    for (std::size_t i = 0; i < n; ++i) e = std::max(e, std::abs(s1.anchors[i].q - q1.q[i]));
    worst[1] = std::max(worst[1], e);

    worst[2] = std::max(worst[2], std::abs(supcon_loss(two, tau).value - oracle_supcon(rows, rb.labels, rb.tau)));

    const OracleQ q2 = oracle_si_supcon_q(rows, rb.labels, rb.subjects, rb.tau);
    const LossResult s2 = si_supcon_loss(two, tau);
    e = std::abs(s2.value - oracle_si_supcon(rows, rb.labels, rb.subjects, rb.tau, q2.q));
    for (std::size_t i = 0; i < n; ++i) e = std::max(e, std::abs(s2.anchors[i].q - q2.q[i]));
    worst[3] = std::max(worst[3], e);

    const EmbeddingBatch bk = cross_batch(rb.z, rb.row_subjects), bm = cross_batch(rb.zm, rb.row_subjects);
    worst[4] = std::max(worst[4], std::abs(cmc_loss(bk, bm, tau).value - oracle_cmc(rows, rows_m, rb.tau)));

    const OracleQ qkm = oracle_cmc_direction_q(rows, rows_m, rb.row_subjects, rb.tau);
    const OracleQ qmk = oracle_cmc_direction_q(rows_m, rows, rb.row_subjects, rb.tau);
    const CrossModalLossResult s3 = si_cmc_loss(bk, bm, tau);
    e = std::abs(s3.value - oracle_si_cmc(rows, rows_m, rb.row_subjects, rb.tau, qkm.q, qmk.q));
    for (std::size_t i = 0; i < n; ++i)
      e = std::max({e, std::abs(s3.anchors[i].q - qkm.q[i]), std::abs(s3.anchors[n + i].q - qmk.q[i])});
    worst[5] = std::max(worst[5], e);
  }
  const char* names[] = {"nce", "sicl", "supcon", "si_supcon", "cmc", "si_cmc"};
  std::ostringstream os;
  for (int k = 0; k < 6; ++k) os << (k ? " " : "") << names[k] << '=' << worst[k];
  r.measured = *std::max_element(std::begin(worst), std::end(worst));
  r.passed = r.measured < r.tolerance;
  r.detail = std::to_string(batches) + " batches; " + os.str();
  r.seconds = timer.seconds();
  return r;
}

CheckResult check_loss_gradients(int seeds, std::uint64_t seed) {
  Timer timer;
  CheckResult r;
  r.name = "loss_gradients";
  r.tolerance = 1e-5;
  double worst[6] = {};
  for (int s = 0; s < seeds; ++s) {
    Rng rng(derive_seed(seed, "loss_grad", static_cast<std::uint64_t>(s)));
    const std::size_t n = pick(rng, {8, 16});
    const RandomBatch rb = random_batch(rng, n, 8);
    const Temperature tau(rb.tau);
    const auto view = pairing(n);
    const EmbeddingBatch two = EmbeddingBatch::two_view(rb.z, rb.subjects, rb.labels);
    const Rows rows = to_rows(rb.z), rows_m = to_rows(rb.zm);
    const std::vector<int>& subj = rb.subjects;
    const std::vector<int>& lab = rb.labels;
    const double t = rb.tau;

    auto fd = [&](auto&& f, const Tensor& at) { return finite_difference(f, at, kEps); };

    worst[0] = std::max(worst[0], relative_error(nce_loss(two, tau).grad_z,
                                                 fd([&](const Tensor& z) { return oracle_nce(to_rows(z), view, t); }, rb.z)));

    const auto q1 = oracle_sicl_q(rows, subj, view, t).q;
    worst[1] = std::max(worst[1],
                        relative_error(sicl_loss(two, tau).grad_z,
                                       fd([&](const Tensor& z) { return oracle_sicl(to_rows(z), subj, view, t, q1); }, rb.z)));

    worst[2] = std::max(worst[2], relative_error(supcon_loss(two, tau).grad_z,
                                                 fd([&](const Tensor& z) { return oracle_supcon(to_rows(z), lab, t); }, rb.z)));

    const auto q2 = oracle_si_supcon_q(rows, lab, subj, t).q;
    worst[3] = std::max(
        worst[3], relative_error(si_supcon_loss(two, tau).grad_z,
                                 fd([&](const Tensor& z) { return oracle_si_supcon(to_rows(z), lab, subj, t, q2); }, rb.z)));

    const EmbeddingBatch bk = cross_batch(rb.z, rb.row_subjects), bm = cross_batch(rb.zm, rb.row_subjects);
    const Tensor both = concat_rows(rb.z, rb.zm);
    {
      const CrossModalLossResult c = cmc_loss(bk, bm, tau);
      const Tensor num = fd(
          [&](const Tensor& zz) {
            auto [a, b] = split_rows(zz);
            return oracle_cmc(to_rows(a), to_rows(b), t);
          },
          both);
      worst[4] = std::max(worst[4], relative_error(concat_rows(c.grad_k, c.grad_m), num));
    }
    {
      const auto& rs = rb.row_subjects;
      const auto qkm = oracle_cmc_direction_q(rows, rows_m, rs, t).q;
      const auto qmk = oracle_cmc_direction_q(rows_m, rows, rs, t).q;
      const CrossModalLossResult c = si_cmc_loss(bk, bm, tau);
      const Tensor num = fd(
          [&](const Tensor& zz) {
            auto [a, b] = split_rows(zz);
            return oracle_si_cmc(to_rows(a), to_rows(b), rs, t, qkm, qmk);
          },
          both);
      worst[5] = std::max(worst[5], relative_error(concat_rows(c.grad_k, c.grad_m), num));
    }
  }
  const char* names[] = {"nce", "sicl", "supcon", "si_supcon", "cmc", "si_cmc"};
  std::ostringstream os;
  for (int k = 0; k < 6; ++k) os << (k ? " " : "") << names[k] << '=' << worst[k];
  r.measured = *std::max_element(std::begin(worst), std::end(worst));
  r.passed = r.measured < r.tolerance;
  r.detail = std::to_string(seeds) + " seeds; " + os.str();
  r.seconds = timer.seconds();
  return r;
}

CheckResult check_encoder_gradients(int seeds, std::uint64_t seed) {
  Timer timer;
  CheckResult r;
  r.name = "encoder_gradients";
  r.tolerance = 1e-4;
  constexpr std::size_t kChannels = 2, kSteps = 20, kRows = 6;
  const std::vector<int> subjects{0, 0, 0, 0, 1, 1};
  const auto view = pairing(kRows);
  const double t = 0.5;
  std::string worst_name;
  for (int s = 0; s < seeds; ++s) {
    const std::uint64_t run = derive_seed(seed, "encoder_grad", static_cast<std::uint64_t>(s));
    Rng rng(derive_seed(run, "input"));
    const EncoderParams base = EncoderParams::init(kChannels, run);
    // Redraw the input until no ReLU sits within reach of the stencil.
    Tensor x = random_tensor({kRows, kChannels, kSteps}, rng);
    while (relu_margin(base, x) < kReluMargin) x = random_tensor({kRows, kChannels, kSteps}, rng);

    const Tensor z0 = encode_batch(base, x).z;
    const auto q = oracle_sicl_q(to_rows(z0), subjects, view, t).q;

    Tape tape;
    const EncoderVars vars = EncoderVars::track(tape, base);
    const EncodedVars out = encode(vars, tape.constant(x));
    const LossResult loss = sicl_loss(EmbeddingBatch::two_view(out.z.value(), subjects), Temperature(t));
    tape.backward(ad::sum(ad::mul(out.z, tape.constant(loss.grad_z))));
    const std::vector<Tensor> grads = vars.grads(tape);

    EncoderParams probe = base;
    const auto named = probe.named();
    for (std::size_t p = 0; p < named.size(); ++p) {
      Tensor& target = *named[p].second;
      const Tensor original = target;
      // Small tensors are checked whole; large ones on a random coordinate sample.
      std::vector<std::size_t> coords(original.size());
      std::iota(coords.begin(), coords.end(), 0);
      if (coords.size() > kCoordsPerTensor) {
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(kCoordsPerTensor);
      }
      Tensor analytic({coords.size()}), numeric({coords.size()});
      for (std::size_t c = 0; c < coords.size(); ++c) {
        const std::size_t at = coords[c];
        auto value = [&](double w) {
          target[at] = w;
          return oracle_sicl(to_rows(encode_batch(probe, x).z), subjects, view, t, q);
        };
        numeric[c] = (value(original[at] + kEps) - value(original[at] - kEps)) / (2.0 * kEps);
        target[at] = original[at];
        analytic[c] = grads[p][at];
      }
      const double e = relative_error(analytic, numeric);
      if (e > r.measured) {
        r.measured = e;
        worst_name = named[p].first;
      }
    }
  }
  r.passed = r.measured < r.tolerance;
  r.detail = std::to_string(seeds) + " seeds; worst tensor " + worst_name + " " + fmt_err("rel", r.measured);
  r.seconds = timer.seconds();
  return r;
}

CheckResult check_reduction_lattice(int batches, std::uint64_t seed) {
  Timer timer;
  CheckResult r;
  r.name = "reduction_lattice";
  r.tolerance = 1e-12;
  Rng rng(derive_seed(seed, "lattice"));
  // Worst |value difference| and max |grad difference| per identity.
  double worst[6] = {};
  auto gap = [](const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
  };
  auto compare = [&](int slot, const LossResult& a, const LossResult& b) {
    worst[slot] = std::max({worst[slot], std::abs(a.value - b.value), gap(a.grad_z, b.grad_z)});
  };
  for (int k = 0; k < batches; ++k) {
    const std::size_t n = pick(rng, {8, 16, 32});
    const RandomBatch rb = random_batch(rng, n, pick(rng, {4, 8, 32}));
    const Temperature tau(rb.tau);
    const EmbeddingBatch two = EmbeddingBatch::two_view(rb.z, rb.subjects, rb.labels);
    const LossResult nce_value = nce_loss(two, tau);

    compare(0, sicl_loss(two, tau, QMode::kUnit), nce_value);
    compare(1, si_supcon_loss(two, tau, QMode::kUnit), supcon_loss(two, tau));
    {
      const EmbeddingBatch bk = cross_batch(rb.z, rb.row_subjects), bm = cross_batch(rb.zm, rb.row_subjects);
      const CrossModalLossResult a = si_cmc_loss(bk, bm, tau, QMode::kUnit), b = cmc_loss(bk, bm, tau);
      worst[2] = std::max({worst[2], std::abs(a.value - b.value), gap(a.grad_k, b.grad_k), gap(a.grad_m, b.grad_m)});
    }
    {
      std::vector<int> singleton(n);
      for (std::size_t i = 0; i < n; ++i) singleton[i] = static_cast<int>(i / 2);
      compare(3, supcon_loss(EmbeddingBatch::two_view(rb.z, rb.subjects, singleton), tau), nce_value);
    }
    {
      const EmbeddingBatch one_subject = EmbeddingBatch::two_view(rb.z, std::vector<int>(n, 7));
      compare(4, sicl_loss(one_subject, tau), nce_loss(one_subject, tau));
    }
    {
      std::vector<int> own(n);
      for (std::size_t i = 0; i < n; ++i) own[i] = static_cast<int>(i / 2);
      const EmbeddingBatch per_subject = EmbeddingBatch::two_view(rb.z, own);
      compare(5, sicl_loss(per_subject, tau), nce_loss(per_subject, tau));
    }
  }
  const char* names[] = {"sicl_unit=nce", "si_supcon_unit=supcon", "si_cmc_unit=cmc",
                         "supcon_singleton=nce", "sicl_one_subject=nce", "sicl_subject_per_sample=nce"};
  std::ostringstream os;
  for (int k = 0; k < 6; ++k) os << (k ? " " : "") << names[k] << ':' << worst[k];
  r.measured = *std::max_element(std::begin(worst), std::end(worst));
  r.passed = r.measured <= r.tolerance;
  r.detail = os.str();
  r.seconds = timer.seconds();
  return r;
}

CheckResult check_dataset_determinism() {
  Timer timer;
  CheckResult r;
  r.name = "dataset_determinism";
  const auto dir = std::filesystem::temp_directory_path() / ("sicl-verify-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  WorldSpec spec;
  spec.windows_per_pair = 2;
  auto bytes = [&](const char* name) {
    const auto path = dir / name;
    write_dataset(path, generate(spec), spec);
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const std::string a = bytes("a.bin"), b = bytes("b.bin");
  std::filesystem::remove_all(dir);
  r.passed = !a.empty() && a == b;
  r.detail = std::to_string(a.size()) + " bytes, " + (a == b ? "identical" : "different");
  r.seconds = timer.seconds();
  return r;
}

std::vector<CheckResult> run_verify() {
  return {check_oracle_equivalence(), check_loss_gradients(), check_encoder_gradients(),
          check_reduction_lattice(), check_dataset_determinism()};
}

}  // namespace sicl::verify
