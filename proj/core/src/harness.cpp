#include "sicl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "sicl/augment.hpp"
#include "sicl/errors.hpp"
#include "sicl/losses.hpp"
#include "sicl/ops.hpp"
#include "sicl/optim.hpp"
#include "sicl/rng.hpp"

namespace sicl {
namespace {

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(idx[i - 1], idx[pick(rng)]);
  }
}

std::vector<Tensor*> param_ptrs(EncoderParams& p) {
  std::vector<Tensor*> out;
  for (auto& [name, t] : p.named()) out.push_back(t);
  return out;
}

struct Session {
  const SensorWindow* inertial = nullptr;
  const SensorWindow* secondary = nullptr;
};

std::vector<Session> train_sessions(const std::vector<SensorWindow>& train) {
  std::vector<Session> out;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const SensorWindow& w = train[i];
    if (w.modality != Modality::kInertial) continue;
    Session s{&w, nullptr};
    if (i + 1 < train.size() && train[i + 1].modality == Modality::kSecondary &&
        train[i + 1].index / 2 == w.index / 2) {
      s.secondary = &train[i + 1];
    }
    out.push_back(s);
  }
  return out;
}

[[noreturn]] void diverged(int epoch, std::size_t batch, double loss, const Tensor& z,
                           const std::vector<int>& subjects) {
  std::ostringstream os;
  double lo = INFINITY, hi = -INFINITY;
  std::size_t bad = 0;
  for (double v : z.data()) {
    if (!std::isfinite(v)) ++bad;
    else lo = std::min(lo, v), hi = std::max(hi, v);
  }
  std::map<int, int> per_subject;
  for (int s : subjects) ++per_subject[s];
  os << "training diverged at epoch " << epoch << " batch " << batch << ": loss=" << loss
     << ", embedding range [" << lo << ", " << hi << "], non-finite entries " << bad
     << ", batch subjects {";
  for (const auto& [s, n] : per_subject) os << ' ' << s << ':' << n;
  os << " }";
  throw DivergenceError(os.str());
}

bool finite_all(const std::vector<Tensor>& ts) {
  return std::all_of(ts.begin(), ts.end(), [](const Tensor& t) { return t.all_finite(); });
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::size_t AuditLog::violations(const std::set<int>& held_out) const {
  std::size_t n = 0;
  for (const auto& [subject, index] : consumed_) n += held_out.contains(subject);
  return n;
}

EncoderSet EncoderSet::init(LossKind loss, std::uint64_t seed) {
  EncoderSet set;
  set.encoders.push_back(EncoderParams::init(kInertialChannels, derive_seed(seed, "init/inertial")));
  if (is_cross_modal(loss)) {
    set.encoders.push_back(EncoderParams::init(kSecondaryChannels, derive_seed(seed, "init/secondary")));
  }
  return set;
}

Experiment Experiment::build(const RunConfig& config) {
  return from_windows(generate(config.world), config);
}

Experiment Experiment::from_windows(std::vector<SensorWindow> windows, const RunConfig& config) {
  Experiment e;
  e.split = sicl::split(windows, config.split.train_subjects, config.split.test_subjects);
  e.windows = std::move(windows);
  return e;
}

PretrainResult pretrain(const RunConfig& config, const Experiment& data) {
  config.validate();
  const bool cross = is_cross_modal(config.loss);
  const Temperature tau(config.tau);
  PretrainResult result;
  result.model = EncoderSet::init(config.loss, config.seed);
  std::vector<Adam> optimizers(result.model.encoders.size(), Adam(AdamOptions{config.lr}));

  const std::vector<Session> sessions = train_sessions(data.split.train);
  if (cross) {
    for (const auto& s : sessions)
      if (!s.secondary) throw ContractError("pretrain: cross-modal loss needs paired sessions");
  }
  const std::size_t B = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), sessions.size());
  if (B < 2) throw ContractError("pretrain: need at least two training sessions");

  Rng batch_rng = make_rng(config.seed, "batches");
  Rng aug_rng(derive_seed(config.seed, "augment", config.augmentation.rng_seed));
  std::vector<std::size_t> order(sessions.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    shuffle_indices(order, batch_rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + B <= order.size(); start += B, ++batches) {
      std::vector<int> subjects, labels;
      Tape tape;
      if (!cross) {
        std::vector<SensorWindow> views;
        views.reserve(2 * B);
        for (std::size_t k = start; k < start + B; ++k) {
          const SensorWindow& w = *sessions[order[k]].inertial;
          result.audit.record(w);
          for (int v = 0; v < 2; ++v) {
            views.push_back(augment(config.augmentation, w, aug_rng));
            subjects.push_back(w.subject_id);
            labels.push_back(w.activity_id);
          }
        }
        const EncoderVars vars = EncoderVars::track(tape, result.model.encoders[0]);
        const EncodedVars out = encode(vars, tape.constant(stack_windows(views)));
        const EmbeddingBatch batch = EmbeddingBatch::two_view(out.z.value(), subjects, labels);
        LossResult r;
        switch (config.loss) {
          case LossKind::kNce: r = nce_loss(batch, tau); break;
          case LossKind::kSicl: r = sicl_loss(batch, tau); break;
          case LossKind::kSupCon: r = supcon_loss(batch, tau); break;
          case LossKind::kSiSupCon: r = si_supcon_loss(batch, tau); break;
          default: throw ContractError("unreachable loss kind");
        }
        if (!std::isfinite(r.value) || !r.grad_z.all_finite()) {
          diverged(epoch, batches, r.value, out.z.value(), subjects);
        }
        tape.backward(ad::sum(ad::mul(out.z, tape.constant(r.grad_z))));
        const auto grads = vars.grads(tape);
        if (!finite_all(grads)) diverged(epoch, batches, r.value, out.z.value(), subjects);
        optimizers[0].step(param_ptrs(result.model.encoders[0]), grads);
        epoch_loss += r.value;
        result.last_anchors = std::move(r.anchors);
      } else {
        std::vector<SensorWindow> xk, xm;
        for (std::size_t k = start; k < start + B; ++k) {
          const Session& s = sessions[order[k]];
          result.audit.record(*s.inertial);
          result.audit.record(*s.secondary);
          xk.push_back(augment(config.augmentation, *s.inertial, aug_rng));
          xm.push_back(augment(config.augmentation, *s.secondary, aug_rng));
          subjects.push_back(s.inertial->subject_id);
          labels.push_back(s.inertial->activity_id);
        }
        const EncoderVars vk = EncoderVars::track(tape, result.model.encoders[0]);
        const EncoderVars vm = EncoderVars::track(tape, result.model.encoders[1]);
        const EncodedVars ok = encode(vk, tape.constant(stack_windows(xk)));
        const EncodedVars om = encode(vm, tape.constant(stack_windows(xm)));
        const EmbeddingBatch bk{ok.z.value(), subjects, labels, {}};
        const EmbeddingBatch bm{om.z.value(), subjects, labels, {}};
        const CrossModalLossResult r =
            config.loss == LossKind::kCmc ? cmc_loss(bk, bm, tau) : si_cmc_loss(bk, bm, tau);
        if (!std::isfinite(r.value) || !r.grad_k.all_finite() || !r.grad_m.all_finite()) {
          diverged(epoch, batches, r.value, ok.z.value(), subjects);
        }
        tape.backward(ad::add(ad::sum(ad::mul(ok.z, tape.constant(r.grad_k))),
                              ad::sum(ad::mul(om.z, tape.constant(r.grad_m)))));
        const auto gk = vk.grads(tape);
        const auto gm = vm.grads(tape);
        if (!finite_all(gk) || !finite_all(gm)) diverged(epoch, batches, r.value, ok.z.value(), subjects);
        optimizers[0].step(param_ptrs(result.model.encoders[0]), gk);
        optimizers[1].step(param_ptrs(result.model.encoders[1]), gm);
        epoch_loss += r.value;
        result.last_anchors = r.anchors;
      }
    }
    result.loss_curve.push_back(epoch_loss / static_cast<double>(batches));
  }
  return result;
}

ProbeData probe_features(const EncoderSet& model, const std::vector<SensorWindow>& windows) {
  ProbeData out;
  std::vector<std::vector<const SensorWindow*>> per_modality(model.encoders.size());
  for (const auto& w : windows) {
    const auto m = static_cast<std::size_t>(w.modality);
    if (m < per_modality.size()) per_modality[m].push_back(&w);
  }
  for (const auto* w : per_modality[0]) out.labels.push_back(w->activity_id);
  const std::size_t n = per_modality[0].size(), F = model.feature_dim();
  for (std::size_t m = 1; m < per_modality.size(); ++m) {
    if (per_modality[m].size() != n) throw ContractError("probe_features: unpaired modalities");
  }
  out.features = Tensor({n, F});
  constexpr std::size_t kChunk = 128;
  for (std::size_t m = 0; m < model.encoders.size(); ++m) {
    for (std::size_t start = 0; start < n; start += kChunk) {
      const std::size_t stop = std::min(n, start + kChunk);
      std::span<const SensorWindow* const> chunk(per_modality[m].data() + start, stop - start);
      const Encoding enc = encode_batch(model.encoders[m], stack_windows(chunk));
      for (std::size_t r = 0; r < chunk.size(); ++r)
        for (std::size_t f = 0; f < kReprDim; ++f)
          out.features[(start + r) * F + m * kReprDim + f] = enc.h[r * kReprDim + f];
    }
  }
  return out;
}

LinearHead train_linear_probe(const ProbeData& train, int num_classes, const RunConfig& config,
                              std::uint64_t seed) {
  const std::size_t n = train.features.dim(0), F = train.features.dim(1);
  if (n == 0) throw ContractError("linear probe: empty training set");
  std::vector<double> mu(F, 0.0), sd(F, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t f = 0; f < F; ++f) mu[f] += train.features[i * F + f];
  for (double& m : mu) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t f = 0; f < F; ++f) {
      const double d = train.features[i * F + f] - mu[f];
      sd[f] += d * d;
    }
  for (double& s : sd) {
    s = std::sqrt(s / static_cast<double>(n));
    if (s < 1e-12) s = 1.0;
  }
  Tensor standardized({n, F});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t f = 0; f < F; ++f)
      standardized[i * F + f] = (train.features[i * F + f] - mu[f]) / sd[f];

  const auto K = static_cast<std::size_t>(num_classes);
  // The probe objective is convex; a zero start keeps init noise out of the accuracy.
  LinearHead head = LinearHead::zeros(K, F);
  Adam adam(AdamOptions{config.lr});
  Rng rng = make_rng(seed, "probe-batches");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t B = static_cast<std::size_t>(config.probe_batch_size);
  for (int epoch = 0; epoch < config.linear_epochs; ++epoch) {
    shuffle_indices(order, rng);
    for (std::size_t start = 0; start < n; start += B) {
      const std::size_t stop = std::min(n, start + B);
      Tensor x({stop - start, F});
      std::vector<int> y;
      for (std::size_t k = start; k < stop; ++k) {
        std::copy_n(standardized.raw() + order[k] * F, F, x.raw() + (k - start) * F);
        y.push_back(train.labels[order[k]]);
      }
      Tape tape;
      const HeadVars hv = HeadVars::track(tape, head);
      tape.backward(ad::cross_entropy(classify(hv, tape.constant(std::move(x))), y));
      std::vector<Tensor> grads{*tape.grad(hv.weight), *tape.grad(hv.bias)};
      Tensor* params[] = {&head.weight, &head.bias};
      adam.step(params, grads);
    }
  }
  // Fold the standardization into the head so it acts on raw features.
  LinearHead raw = head;
  for (std::size_t k = 0; k < K; ++k) {
    double shift = 0.0;
    for (std::size_t f = 0; f < F; ++f) {
      raw.weight[k * F + f] = head.weight[k * F + f] / sd[f];
      shift += raw.weight[k * F + f] * mu[f];
    }
    raw.bias[k] = head.bias[k] - shift;
  }
  return raw;
}

ClasswiseAccuracy classwise_accuracy(const LinearHead& head, const ProbeData& test, int num_classes) {
  ClasswiseAccuracy out;
  std::vector<std::size_t> hits(static_cast<std::size_t>(num_classes), 0), totals(hits.size(), 0);
  if (test.features.size() > 0) {
    const Tensor logits = classify(head, test.features);
    const std::size_t K = head.num_classes();
    for (std::size_t i = 0; i < test.labels.size(); ++i) {
      const double* row = logits.raw() + i * K;
      const auto pred = static_cast<int>(std::max_element(row, row + K) - row);
      const auto y = static_cast<std::size_t>(test.labels[i]);
      ++totals.at(y);
      hits[y] += pred == test.labels[i];
    }
  }
  double total = 0.0;
  for (std::size_t c = 0; c < totals.size(); ++c) {
    if (totals[c] == 0) {
      out.excluded.push_back(static_cast<int>(c));
      std::cerr << "warning: class " << c << " absent from the evaluation set; excluded from the mean\n";
      continue;
    }
    const double acc = static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
    out.per_class[static_cast<int>(c)] = acc;
    total += acc;
  }
  out.mean = out.per_class.empty() ? 0.0 : total / static_cast<double>(out.per_class.size());
  return out;
}

EvalReport linear_eval(const EncoderSet& model, const RunConfig& config, const Experiment& data,
                       AuditLog* audit) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const ProbeData train = probe_features(model, data.split.train);
  if (audit) {
    for (const auto& w : data.split.train)
      if (static_cast<std::size_t>(w.modality) < model.encoders.size()) audit->record(w);
  }
  const ProbeData test = probe_features(model, data.split.test);
  const LinearHead head = train_linear_probe(train, config.world.num_activities, config, config.seed);
  const ClasswiseAccuracy acc = classwise_accuracy(head, test, config.world.num_activities);

  EvalReport report;
  report.tag = "linear_eval";
  report.per_class_accuracy = acc.per_class;
  report.mean_class_accuracy = acc.mean;
  report.excluded_classes = acc.excluded;
  const auto test_inertial = select_modality(data.split.test, Modality::kInertial);
  if (!test_inertial.empty()) {
    report.sim_stats = analyze_similarities(model.encoders[0], test_inertial,
                                            derive_seed(config.seed, "similarity"),
                                            config.max_similarity_pairs);
  }
  report.config_echo = config;
  report.wall_seconds = seconds_since(t0);
  return report;
}

FinetuneResult finetune(const std::optional<EncoderSet>& init, const RunConfig& config,
                        const Experiment& data, AuditLog* audit) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  FinetuneResult out;
  out.model.encoders.push_back(init ? init->encoders.at(0)
                                    : EncoderSet::init(LossKind::kNce, derive_seed(config.seed, "finetune-init"))
                                          .encoders[0]);
  EncoderParams& enc = out.model.encoders[0];
  const auto train = select_modality(data.split.train, Modality::kInertial);
  if (train.empty()) throw ContractError("finetune: empty training set");
  // The head starts from a linear probe on the starting encoder, so end-to-end
  // training begins where linear evaluation ends.
  out.head = train_linear_probe(probe_features(out.model, train), config.world.num_activities, config,
                                derive_seed(config.seed, "finetune-head"));
  Adam enc_opt(AdamOptions{config.lr}), head_opt(AdamOptions{config.lr});
  Rng rng = make_rng(config.seed, "finetune-batches");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t B = static_cast<std::size_t>(config.probe_batch_size);
  for (int epoch = 0; epoch < config.linear_epochs; ++epoch) {
    shuffle_indices(order, rng);
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t stop = std::min(order.size(), start + B);
      std::vector<const SensorWindow*> batch;
      std::vector<int> y;
      for (std::size_t k = start; k < stop; ++k) {
        batch.push_back(&train[order[k]]);
        y.push_back(train[order[k]].activity_id);
        if (audit) audit->record(train[order[k]]);
      }
      Tape tape;
      const EncoderVars ev = EncoderVars::track(tape, enc);
      const HeadVars hv = HeadVars::track(tape, out.head);
      const EncodedVars e = encode(ev, tape.constant(stack_windows(batch)));
      const Var loss = ad::cross_entropy(classify(hv, e.h), y);
      if (!std::isfinite(loss.value().item())) {
        throw DivergenceError("finetune diverged at epoch " + std::to_string(epoch));
      }
      tape.backward(loss);
      enc_opt.step(param_ptrs(enc), ev.grads(tape));
      std::vector<Tensor> hg{*tape.grad(hv.weight), *tape.grad(hv.bias)};
      Tensor* hp[] = {&out.head.weight, &out.head.bias};
      head_opt.step(hp, hg);
    }
  }

  const ProbeData test = probe_features(out.model, data.split.test);
  const ClasswiseAccuracy acc = classwise_accuracy(out.head, test, config.world.num_activities);
  out.report.tag = init ? "finetune/pretrained" : "finetune/random-init";
  out.report.per_class_accuracy = acc.per_class;
  out.report.mean_class_accuracy = acc.mean;
  out.report.excluded_classes = acc.excluded;
  out.report.config_echo = config;
  out.report.wall_seconds = seconds_since(t0);
  return out;
}

std::vector<MatrixRow> run_matrix(const std::vector<RunConfig>& configs, int jobs,
                                  const std::function<void(const MatrixRow&)>& on_row) {
  std::vector<MatrixRow> rows(configs.size());
  std::atomic<std::size_t> next{0};
  std::mutex report_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      const RunConfig& c = configs[i];
      MatrixRow row;
      row.loss = c.loss;
      row.seed = c.seed;
      try {
        const Experiment data = Experiment::build(c);
        const PretrainResult pre = pretrain(c, data);
        const EvalReport report = linear_eval(pre.model, c, data);
        row.mean_class_accuracy = report.mean_class_accuracy;
        row.gap = report.sim_stats ? report.sim_stats->gap : NAN;
        row.loss_curve = pre.loss_curve;
      } catch (const std::exception& e) {
        row.error = e.what();
        row.mean_class_accuracy = NAN;
        row.gap = NAN;
      }
      rows[i] = row;
      if (on_row) {
        std::lock_guard lock(report_mutex);
        on_row(rows[i]);
      }
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, jobs));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(n, configs.size()); ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return rows;
}

nlohmann::json to_json(const SimStats& s) {
  return {{"mean_all", s.mean_all},
          {"std_all", s.std_all},
          {"mean_intra_subject", s.mean_intra_subject},
          {"std_intra_subject", s.std_intra_subject},
          {"gap", s.gap},
          {"pairs_all", s.pairs_all},
          {"pairs_intra_subject", s.pairs_intra_subject}};
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [c, a] : r.per_class_accuracy) per_class[std::to_string(c)] = a;
  nlohmann::json j = {{"tag", r.tag},
                      {"per_class_accuracy", per_class},
                      {"mean_class_accuracy", r.mean_class_accuracy},
                      {"excluded_classes", r.excluded_classes},
                      {"config", r.config_echo},
                      {"wall_seconds", r.wall_seconds}};
  j["sim_stats"] = r.sim_stats ? to_json(*r.sim_stats) : nlohmann::json(nullptr);
  return j;
}

}  // namespace sicl
