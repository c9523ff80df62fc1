#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <vector>

#include "sicl/window.hpp"

namespace sicl {

/// Parameters of the synthetic multi-subject world. Each activity owns a
/// latent waveform template; each subject owns a frozen nuisance transform
/// (per-channel gain and offset, triplet rotation, speed) whose distance from
/// identity grows with subject_nuisance_strength.
struct WorldSpec {
  int num_subjects = 12;
  int num_activities = 6;
  int windows_per_pair = 10;
  double subject_nuisance_strength = 0.8;
  double noise_sigma = 0.05;
  std::uint64_t rng_seed = 2025;

  void validate() const;
};

inline constexpr std::size_t kInertialChannels = 6;
inline constexpr std::size_t kSecondaryChannels = 9;

/// Per-subject, per-modality nuisance, drawn once from the world seed.
struct SubjectNuisance {
  double speed = 1.0;
  std::vector<double> gain;
  std::vector<double> offset;
  /// One row-major 3x3 rotation per channel triplet.
  std::vector<std::array<double, 9>> rotations;
};

SubjectNuisance subject_nuisance(const WorldSpec& spec, int subject, Modality modality);

/// Sessions in subject-major, then activity, then repetition order. Each
/// session contributes two consecutive windows: inertial, then secondary.
std::vector<SensorWindow> generate(const WorldSpec& spec);

struct Split {
  std::vector<SensorWindow> train;
  std::vector<SensorWindow> test;
};

/// Cross-subject partition preserving window order (and hence session pairing).
Split split(const std::vector<SensorWindow>& windows, const std::set<int>& train_subjects,
            const std::set<int>& test_subjects);

/// Windows of one modality, in order.
std::vector<SensorWindow> select_modality(const std::vector<SensorWindow>& windows, Modality m);

}  // namespace sicl
