#include "sicl/verify/oracles.hpp"

#include <cmath>
#include <stdexcept>

namespace sicl::verify {

Rows to_rows(const Tensor& z) {
  Rows rows(z.dim(0), std::vector<double>(z.dim(1)));
  for (std::size_t i = 0; i < z.dim(0); ++i)
    for (std::size_t k = 0; k < z.dim(1); ++k) rows[i][k] = z[i * z.dim(1) + k];
  return rows;
}

Tensor from_rows(const Rows& rows) {
  Tensor z({rows.size(), rows.empty() ? 0 : rows[0].size()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k) z[i * rows[i].size() + k] = rows[i][k];
  return z;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

namespace {

double ex(const std::vector<double>& a, const std::vector<double>& b, double tau) {
  return std::exp(dot(a, b) / tau);
}

// q_i = p_i / mean(p over anchors with a non-empty same-subject set); all 1 if none.
void normalize_q(OracleQ& out, const std::vector<bool>& has_same) {
  double total = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < out.p.size(); ++i)
    if (has_same[i]) total += out.p[i], ++count;
  out.q.assign(out.p.size(), 1.0);
  if (count == 0) return;
  const double mean = total / count;
  for (std::size_t i = 0; i < out.p.size(); ++i) out.q[i] = out.p[i] / mean;
}

}  // namespace

double oracle_nce(const Rows& z, std::span<const std::size_t> view_of, double tau) {
  const std::size_t n = z.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = view_of[i];
    const double numerator = ex(z[i], z[j], tau);
    double denominator = numerator;  // positive term
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i || a == j) continue;  // A(i)
      denominator += ex(z[i], z[a], tau);
    }
    total += -std::log(numerator / denominator);
  }
  return total / static_cast<double>(n);
}

OracleQ oracle_sicl_q(const Rows& z, std::span<const int> subjects, std::span<const std::size_t> view_of, double tau) {
  const std::size_t n = z.size();
  OracleQ out;
  std::vector<bool> has_same(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    double same = 0.0, all = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i || a == view_of[i]) continue;
      const double e = ex(z[i], z[a], tau);
      all += e;
      if (subjects[a] == subjects[i]) {
        same += e;
        has_same[i] = true;
      }
    }
    out.p.push_back(has_same[i] ? same / all : 0.0);
  }
  normalize_q(out, has_same);
  return out;
}

double oracle_sicl(const Rows& z, std::span<const int> subjects, std::span<const std::size_t> view_of, double tau,
            std::span<const double> q) {
  const std::size_t n = z.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = view_of[i];
    const double numerator = ex(z[i], z[j], tau);
    double same_sum = 0.0, other_sum = numerator;  // the positive sits in the k-not-in-S(i) sum
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i || a == j) continue;
      if (subjects[a] == subjects[i]) same_sum += ex(z[i], z[a], tau);
      else other_sum += ex(z[i], z[a], tau);
    }
    const double D = q[i] * same_sum + other_sum;
    total += -std::log(numerator / D);
  }
  return total / static_cast<double>(n);
}

double oracle_supcon(const Rows& z, std::span<const int> labels, double tau) {
  const std::size_t n = z.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double denominator = 0.0;
    for (std::size_t a = 0; a < n; ++a)
      if (a != i) denominator += ex(z[i], z[a], tau);
    double inner = 0.0;
    int positives = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if (p == i || labels[p] != labels[i]) continue;
      inner += std::log(ex(z[i], z[p], tau) / denominator);
      ++positives;
    }
    if (positives == 0) throw std::invalid_argument("oracle supcon: anchor without positives");
    total += -inner / positives;
  }
  return total / static_cast<double>(n);
}

OracleQ oracle_si_supcon_q(const Rows& z, std::span<const int> labels, std::span<const int> subjects, double tau) {
  const std::size_t n = z.size();
  OracleQ out;
  std::vector<bool> has_same(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    double same = 0.0, all = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i || labels[a] == labels[i]) continue;
      const double e = ex(z[i], z[a], tau);
      all += e;
      if (subjects[a] == subjects[i]) {
        same += e;
        has_same[i] = true;
      }
    }
    out.p.push_back(has_same[i] ? same / all : 0.0);
  }
  normalize_q(out, has_same);
  return out;
}

double oracle_si_supcon(const Rows& z, std::span<const int> labels, std::span<const int> subjects, double tau,
                 std::span<const double> q) {
  const std::size_t n = z.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double same_sum = 0.0, rest = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      const bool in_s = labels[a] != labels[i] && subjects[a] == subjects[i];
      (in_s ? same_sum : rest) += ex(z[i], z[a], tau);
    }
    const double D = q[i] * same_sum + rest;
    double inner = 0.0;
    int positives = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if (p == i || labels[p] != labels[i]) continue;
      inner += std::log(ex(z[i], z[p], tau) / D);
      ++positives;
    }
    if (positives == 0) throw std::invalid_argument("oracle si_supcon: anchor without positives");
    total += -inner / positives;
  }
  return total / static_cast<double>(n);
}

namespace {

double cmc_direction(const Rows& a, const Rows& b, double tau, std::span<const int> subjects,
                     std::span<const double> q) {
  const std::size_t n = a.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double numerator = ex(a[i], b[i], tau);
    double same_sum = 0.0, other_sum = numerator;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      if (!subjects.empty() && subjects[k] == subjects[i]) same_sum += ex(a[i], b[k], tau);
      else other_sum += ex(a[i], b[k], tau);
    }
    const double D = (q.empty() ? 1.0 : q[i]) * same_sum + other_sum;
    total += -std::log(numerator / D);
  }
  return total;
}

}  // namespace

double oracle_cmc(const Rows& zk, const Rows& zm, double tau) {
  return (cmc_direction(zk, zm, tau, {}, {}) + cmc_direction(zm, zk, tau, {}, {})) /
         (2.0 * static_cast<double>(zk.size()));
}

OracleQ oracle_cmc_direction_q(const Rows& a, const Rows& b, std::span<const int> subjects, double tau) {
  const std::size_t n = a.size();
  OracleQ out;
  std::vector<bool> has_same(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    double same = 0.0, all = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      const double e = ex(a[i], b[k], tau);
      all += e;
      if (subjects[k] == subjects[i]) {
        same += e;
        has_same[i] = true;
      }
    }
    out.p.push_back(has_same[i] ? same / all : 0.0);
  }
  normalize_q(out, has_same);
  return out;
}

double oracle_si_cmc(const Rows& zk, const Rows& zm, std::span<const int> subjects, double tau,
              std::span<const double> q_km, std::span<const double> q_mk) {
  return (cmc_direction(zk, zm, tau, subjects, q_km) + cmc_direction(zm, zk, tau, subjects, q_mk)) /
         (2.0 * static_cast<double>(zk.size()));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

Tensor conv1d(const Tensor& x, const Tensor& w, std::size_t stride) {
  const std::size_t C = x.dim(0), T = x.dim(1), O = w.dim(0), K = w.dim(2);
  const std::size_t To = (T - K) / stride + 1;
  Tensor y({O, To});
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t t = 0; t < To; ++t) {
      double s = 0.0;
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t k = 0; k < K; ++k) s += w[(o * C + c) * K + k] * x[c * T + t * stride + k];
      y[o * To + t] = s;
    }
  return y;
}

double relu_margin(const EncoderParams& params, const Tensor& x) {
  const std::size_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
  double margin = INFINITY;
  for (std::size_t b = 0; b < B; ++b) {
    Tensor a({C, T});
    std::copy_n(x.raw() + b * C * T, C * T, a.raw());
    for (const auto* layer : {&params.conv1_w, &params.conv2_w, &params.conv3_w}) {
      const Tensor& bias = layer == &params.conv1_w ? params.conv1_b
                           : layer == &params.conv2_w ? params.conv2_b
                                                      : params.conv3_b;
      a = conv1d(a, *layer, 1);
      for (std::size_t o = 0; o < a.dim(0); ++o)
        for (std::size_t t = 0; t < a.dim(1); ++t) {
          double& v = a[o * a.dim(1) + t];
          v += bias[o];
          margin = std::min(margin, std::abs(v));
          v = std::max(v, 0.0);
        }
    }
    Tensor h({1, a.dim(0)});
    for (std::size_t o = 0; o < a.dim(0); ++o) {
      double s = 0.0;
      for (std::size_t t = 0; t < a.dim(1); ++t) s += a[o * a.dim(1) + t];
      h[o] = s / static_cast<double>(a.dim(1));
    }
    const Tensor hidden = matmul(h, params.proj1_w);
    for (std::size_t k = 0; k < hidden.size(); ++k) margin = std::min(margin, std::abs(hidden[k] + params.proj1_b[k]));
  }
  return margin;
}

Tensor finite_difference(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps) {
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(probe);
    probe[i] = orig - eps;
    const double down = f(probe);
    probe[i] = orig;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

double relative_error(const Tensor& a, const Tensor& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

Tensor random_tensor(Shape shape, Rng& rng, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = g(rng);
  return t;
}

Tensor random_unit_rows(std::size_t n, std::size_t d, Rng& rng) {
  Tensor z = random_tensor({n, d}, rng);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) sq += z[i * d + k] * z[i * d + k];
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t k = 0; k < d; ++k) z[i * d + k] *= inv;
  }
  return z;
}

}  // namespace sicl::verify
