#pragma once

// Brute-force reference formulas. Nothing here calls into the loss, conv or
// matmul implementations it is used to check: sets are built explicitly and
// every exponential is evaluated directly.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sicl/model.hpp"
#include "sicl/rng.hpp"
#include "sicl/tensor.hpp"

namespace sicl::verify {

using Rows = std::vector<std::vector<double>>;

Rows to_rows(const Tensor& z);
Tensor from_rows(const Rows& rows);

double dot(const std::vector<double>& a, const std::vector<double>& b);

/// Per-anchor q given explicitly (stop-gradient), or computed from z when empty.
struct OracleQ {
  std::vector<double> p;
  std::vector<double> q;
};

double oracle_nce(const Rows& z, std::span<const std::size_t> view_of, double tau);

/// p_i over the two-view negative set A(i) = all but i and its partner.
OracleQ oracle_sicl_q(const Rows& z, std::span<const int> subjects, std::span<const std::size_t> view_of, double tau);
double oracle_sicl(const Rows& z, std::span<const int> subjects, std::span<const std::size_t> view_of, double tau,
            std::span<const double> q);

double oracle_supcon(const Rows& z, std::span<const int> labels, double tau);

/// p_i over the supervised negative set A(i) = different-label rows.
OracleQ oracle_si_supcon_q(const Rows& z, std::span<const int> labels, std::span<const int> subjects, double tau);
double oracle_si_supcon(const Rows& z, std::span<const int> labels, std::span<const int> subjects, double tau,
                 std::span<const double> q);

double oracle_cmc(const Rows& zk, const Rows& zm, double tau);

/// q for one anchoring direction: anchors from `a`, candidates from `b`.
OracleQ oracle_cmc_direction_q(const Rows& a, const Rows& b, std::span<const int> subjects, double tau);
double oracle_si_cmc(const Rows& zk, const Rows& zm, std::span<const int> subjects, double tau,
              std::span<const double> q_km, std::span<const double> q_mk);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor conv1d(const Tensor& x, const Tensor& w, std::size_t stride);

/// Smallest |pre-activation| over every ReLU of the encoder on batch x
/// [B x C x T]. Central differences are only meaningful when this exceeds the
/// step times the local Lipschitz factor; otherwise a kink lies inside the stencil.
double relu_margin(const EncoderParams& params, const Tensor& x);

/// Central differences of f at x, one coordinate at a time.
Tensor finite_difference(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps);

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
double relative_error(const Tensor& a, const Tensor& b);

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0);
/// N x d with unit-norm rows.
Tensor random_unit_rows(std::size_t n, std::size_t d, Rng& rng);

}  // namespace sicl::verify
