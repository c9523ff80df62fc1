#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sicl::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;   // worst error observed
  double tolerance = 0.0;
  std::string detail;
  double seconds = 0.0;
};

/// Each loss against its brute-force oracle on random batches; absolute error.
CheckResult check_oracle_equivalence(int batches = 100, std::uint64_t seed = 11);

/// Loss grad_z against central differences of the oracle with Q frozen.
CheckResult check_loss_gradients(int seeds = 20, std::uint64_t seed = 12);

/// Encoder parameter gradients of a SICL objective on a tiny configuration
/// (2 channels, 20 steps), against central differences of the forward pass.
/// Tensors larger than 256 entries are checked on 256 random coordinates;
/// inputs are redrawn until every ReLU pre-activation is at least 1e-5 from zero.
CheckResult check_encoder_gradients(int seeds = 20, std::uint64_t seed = 13);

/// Equalities that must hold when Q is 1 or the batch leaves it no work.
CheckResult check_reduction_lattice(int batches = 50, std::uint64_t seed = 14);

/// Two generations from one seed serialize to identical bytes.
CheckResult check_dataset_determinism();

std::vector<CheckResult> run_verify();

}  // namespace sicl::verify
