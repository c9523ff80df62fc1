#include "sicl/synthgen.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "sicl/errors.hpp"
#include "sicl/rng.hpp"

namespace sicl {
namespace {

constexpr std::size_t kLatents = 3;
constexpr std::size_t kHarmonics = 3;

struct Harmonic {
  double amplitude, cycles, phase;
};

// latent k of activity a is sum_h amplitude * sin(2 pi cycles u + phase)
using Template = std::array<std::array<Harmonic, kHarmonics>, kLatents>;

Template activity_template(const WorldSpec& spec, int activity) {
  Rng rng(derive_seed(spec.rng_seed, "template", static_cast<std::uint64_t>(activity)));
  std::uniform_real_distribution<double> amp(0.4, 1.0);
  std::uniform_int_distribution<int> cycles(1, 6);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  Template t{};
  for (auto& latent : t)
    for (auto& h : latent) h = {amp(rng), static_cast<double>(cycles(rng)), phase(rng)};
  return t;
}

std::vector<double> mixing_matrix(const WorldSpec& spec, Modality m) {
  const std::size_t C = m == Modality::kInertial ? kInertialChannels : kSecondaryChannels;
  Rng rng(derive_seed(spec.rng_seed, "mixing", static_cast<std::uint64_t>(m)));
  std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(kLatents)));
  std::vector<double> mix(C * kLatents);
  for (double& v : mix) v = g(rng);
  return mix;
}

std::array<double, 9> axis_angle(const std::array<double, 3>& axis, double angle) {
  const double c = std::cos(angle), s = std::sin(angle), C = 1.0 - c;
  const double x = axis[0], y = axis[1], z = axis[2];
  return {c + x * x * C,     x * y * C - z * s, x * z * C + y * s,
          y * x * C + z * s, c + y * y * C,     y * z * C - x * s,
          z * x * C - y * s, z * y * C + x * s, c + z * z * C};
}

}  // namespace

void WorldSpec::validate() const {
  if (num_subjects < 2) throw ContractError("world: num_subjects must be >= 2");
  if (num_activities < 2) throw ContractError("world: num_activities must be >= 2");
  if (windows_per_pair < 1) throw ContractError("world: windows_per_pair must be >= 1");
  if (!(subject_nuisance_strength >= 0.0 && subject_nuisance_strength <= 1.0)) {
    throw ContractError("world: subject_nuisance_strength must lie in [0, 1]");
  }
  if (!(noise_sigma >= 0.0)) throw ContractError("world: noise_sigma must be >= 0");
}

SubjectNuisance subject_nuisance(const WorldSpec& spec, int subject, Modality modality) {
  const double k = spec.subject_nuisance_strength;
  const std::size_t C = modality == Modality::kInertial ? kInertialChannels : kSecondaryChannels;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  // Speed is a property of the person and shared across modalities.
  Rng speed_rng(derive_seed(spec.rng_seed, "speed", static_cast<std::uint64_t>(subject)));
  SubjectNuisance n;
  n.speed = 1.0 + k * 0.25 * unit(speed_rng);

  Rng rng(derive_seed(spec.rng_seed, "subject/" + std::string(modality_name(modality)),
                      static_cast<std::uint64_t>(subject)));
  n.gain.resize(C);
  n.offset.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    n.gain[c] = 1.0 + k * 0.6 * unit(rng);
    n.offset[c] = k * 1.0 * unit(rng);
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi / 2.0);
  for (std::size_t g = 0; g < C / 3; ++g) {
    std::array<double, 3> axis{gauss(rng), gauss(rng), gauss(rng)};
    const double norm = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
    for (double& a : axis) a /= norm;
    n.rotations.push_back(axis_angle(axis, k * angle(rng)));
  }
  return n;
}

std::vector<SensorWindow> generate(const WorldSpec& spec) {
  spec.validate();
  const std::size_t T = kWindowSteps;
  const auto A = static_cast<std::size_t>(spec.num_activities);
  const auto W = static_cast<std::size_t>(spec.windows_per_pair);

  std::vector<Template> templates;
  for (std::size_t a = 0; a < A; ++a) templates.push_back(activity_template(spec, static_cast<int>(a)));
  const Modality modalities[] = {Modality::kInertial, Modality::kSecondary};
  const std::vector<double> mixes[] = {mixing_matrix(spec, modalities[0]),
                                       mixing_matrix(spec, modalities[1])};

  std::vector<SensorWindow> out;
  out.reserve(static_cast<std::size_t>(spec.num_subjects) * A * W * 2);
  for (int s = 0; s < spec.num_subjects; ++s) {
    const SubjectNuisance nuisance[] = {subject_nuisance(spec, s, modalities[0]),
                                        subject_nuisance(spec, s, modalities[1])};
    for (std::size_t a = 0; a < A; ++a) {
      for (std::size_t w = 0; w < W; ++w) {
        // Repetition-level variation is keyed by (activity, repetition) only, so
        // with the nuisance switched off every subject emits the same windows.
        Rng rep_rng(derive_seed(spec.rng_seed, "repetition", a * W + w));
        std::uniform_real_distribution<double> shift(0.0, 0.1);
        std::uniform_real_distribution<double> amp(0.85, 1.15);
        const double start = shift(rep_rng);
        const double gain = amp(rep_rng);

        std::array<std::vector<double>, kLatents> latent;
        for (std::size_t l = 0; l < kLatents; ++l) {
          latent[l].assign(T, 0.0);
          for (std::size_t t = 0; t < T; ++t) {
            const double u = start + nuisance[0].speed * static_cast<double>(t) / static_cast<double>(T);
            double v = 0.0;
            for (const Harmonic& h : templates[a][l]) {
              v += h.amplitude * std::sin(2.0 * std::numbers::pi * h.cycles * u + h.phase);
            }
            latent[l][t] = gain * v;
          }
        }

        const std::uint64_t session = (static_cast<std::uint64_t>(s) * A + a) * W + w;
        Rng noise_rng(derive_seed(spec.rng_seed, "noise", session));
        std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0 ? spec.noise_sigma : 1.0);

        for (std::size_t m = 0; m < 2; ++m) {
          const std::size_t C = m == 0 ? kInertialChannels : kSecondaryChannels;
          const SubjectNuisance& nz = nuisance[m];
          Tensor values({C, T});
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < T; ++t) {
              double v = 0.0;
              for (std::size_t l = 0; l < kLatents; ++l) v += mixes[m][c * kLatents + l] * latent[l][t];
              values[c * T + t] = v;
            }
          for (std::size_t g = 0; g < C / 3; ++g) {
            const auto& r = nz.rotations[g];
            for (std::size_t t = 0; t < T; ++t) {
              const double x = values[3 * g * T + t], y = values[(3 * g + 1) * T + t],
                           z = values[(3 * g + 2) * T + t];
              values[3 * g * T + t] = r[0] * x + r[1] * y + r[2] * z;
              values[(3 * g + 1) * T + t] = r[3] * x + r[4] * y + r[5] * z;
              values[(3 * g + 2) * T + t] = r[6] * x + r[7] * y + r[8] * z;
            }
          }
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t t = 0; t < T; ++t) {
              double& v = values[c * T + t];
              v = nz.gain[c] * v + nz.offset[c];
              if (spec.noise_sigma > 0.0) v += noise(noise_rng);
            }
          out.push_back(SensorWindow{std::move(values), s, static_cast<int>(a), modalities[m], out.size()});
        }
      }
    }
  }
  return out;
}

Split split(const std::vector<SensorWindow>& windows, const std::set<int>& train_subjects,
            const std::set<int>& test_subjects) {
  for (int s : train_subjects) {
    if (test_subjects.contains(s)) {
      throw ContractError("split: subject " + std::to_string(s) + " in both train and test sets");
    }
  }
  Split out;
  for (const auto& w : windows) {
    if (train_subjects.contains(w.subject_id)) out.train.push_back(w);
    else if (test_subjects.contains(w.subject_id)) out.test.push_back(w);
  }
  return out;
}

std::vector<SensorWindow> select_modality(const std::vector<SensorWindow>& windows, Modality m) {
  std::vector<SensorWindow> out;
  for (const auto& w : windows)
    if (w.modality == m) out.push_back(w);
  return out;
}

}  // namespace sicl
