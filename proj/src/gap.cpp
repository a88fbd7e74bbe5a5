#include "dali/gap.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dali/errors.hpp"

namespace dali {

std::vector<double> mean_pool(const Matrix& tokens) {
  if (tokens.rows() == 0 || tokens.cols() == 0) {
    throw ContractError("mean_pool requires a nonempty token set");
  }
  std::vector<double> out(tokens.cols(), 0.0);
  for (std::size_t i = 0; i < tokens.rows(); ++i) {
    for (std::size_t j = 0; j < tokens.cols(); ++j) out[j] += tokens(i, j);
  }
  for (double& v : out) v /= static_cast<double>(tokens.rows());
  return out;
}

Matrix pool_samples(const std::vector<Matrix>& samples) {
  if (samples.empty()) throw ContractError("pool_samples requires at least one sample");
  const std::size_t d = samples.front().cols();
  Matrix out(samples.size(), d);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    if (samples[s].cols() != d) {
      throw DimensionError("pooled samples must share the feature dimension " +
                           std::to_string(d));
    }
    auto mean = mean_pool(samples[s]);
    for (std::size_t j = 0; j < d; ++j) out(s, j) = mean[j];
  }
  return out;
}

namespace {

constexpr std::size_t kPowerIterationCap = 10000;
constexpr double kPowerTol = 1e-10;

// Symmetric matrix-vector product.
std::vector<double> mat_vec(const Matrix& c, const std::vector<double>& v) {
  std::vector<double> out(v.size(), 0.0);
  for (std::size_t i = 0; i < c.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c.cols(); ++j) s += c(i, j) * v[j];
    out[i] = s;
  }
  return out;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void orthogonalize_against(std::vector<double>& v, const std::vector<double>& u) {
  double dot = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * u[i];
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= dot * u[i];
}

// Dominant eigenvector by power iteration, deterministically started from
// the axis with the largest diagonal mass; optionally kept orthogonal to a
// previously found component each step. Returns false when the operator has
// no mass along any admissible direction.
bool power_iteration(const Matrix& c, const std::vector<double>* against,
                     std::vector<double>& vec, double& value) {
  const std::size_t d = c.rows();
  std::size_t start = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < d; ++i) {
    double diag = c(i, i);
    if (against != nullptr) diag -= (*against)[i] * (*against)[i] * value;
    if (diag > best) {
      best = diag;
      start = i;
    }
  }
  vec.assign(d, 0.0);
  vec[start] = 1.0;
  if (against != nullptr) {
    orthogonalize_against(vec, *against);
    const double n = norm(vec);
    if (n < 1e-12) {
      // Start axis collapsed onto the first component; fall back to the
      // lowest-index axis with a surviving orthogonal part.
      for (std::size_t i = 0; i < d; ++i) {
        vec.assign(d, 0.0);
        vec[i] = 1.0;
        orthogonalize_against(vec, *against);
        if (norm(vec) > 1e-6) break;
      }
    }
    const double n2 = norm(vec);
    if (n2 < 1e-12) return false;
    for (double& x : vec) x /= n2;
  }

  double prev_value = 0.0;
  for (std::size_t it = 0; it < kPowerIterationCap; ++it) {
    std::vector<double> next = mat_vec(c, vec);
    if (against != nullptr) orthogonalize_against(next, *against);
    const double n = norm(next);
    if (n < 1e-300) return false;  // no variance in the admissible subspace
    for (double& x : next) x /= n;
    double dot = 0.0;
    for (std::size_t i = 0; i < vec.size(); ++i) dot += next[i] * vec[i];
    // Eigenvectors are direction-only; fold the sign into the convergence test.
    if (dot < 0.0) {
      for (double& x : next) x = -x;
      dot = -dot;
    }
    vec = next;
    const std::vector<double> cv = mat_vec(c, vec);
    double rayleigh = 0.0;
    for (std::size_t i = 0; i < vec.size(); ++i) rayleigh += cv[i] * vec[i];
    if (it > 0 && std::abs(rayleigh - prev_value) <= kPowerTol * std::max(1.0, std::abs(rayleigh)) &&
        1.0 - dot <= kPowerTol) {
      value = rayleigh;
      return true;
    }
    prev_value = rayleigh;
  }
  value = prev_value;
  return true;  // deterministic result at the cap
}

void fix_sign(std::vector<double>& v) {
  for (double x : v) {
    if (x > 1e-12) return;
    if (x < -1e-12) {
      for (double& y : v) y = -y;
      return;
    }
  }
}

}  // namespace

Pca2d pca_2d(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("populations must share the feature dimension, got " +
                         std::to_string(a.cols()) + " and " + std::to_string(b.cols()));
  }
  const std::size_t d = a.cols();
  const std::size_t n = a.rows() + b.rows();
  if (n < 3) throw DimensionError("pca needs at least 3 pooled points, got " + std::to_string(n));
  if (d < 2) throw DimensionError("pca needs at least 2 feature dimensions, got " + std::to_string(d));

  std::vector<double> mean(d, 0.0);
  auto add_rows = [&](const Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t j = 0; j < d; ++j) mean[j] += m(i, j);
    }
  };
  add_rows(a);
  add_rows(b);
  for (double& v : mean) v /= static_cast<double>(n);

  Matrix cov(d, d);
  auto accumulate = [&](const Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t p = 0; p < d; ++p) {
        const double xp = m(i, p) - mean[p];
        for (std::size_t q = 0; q < d; ++q) cov(p, q) += xp * (m(i, q) - mean[q]);
      }
    }
  };
  accumulate(a);
  accumulate(b);
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < cov.size(); ++i) cov.data()[i] /= denom;

  double trace = 0.0;
  for (std::size_t i = 0; i < d; ++i) trace += cov(i, i);
  if (!(trace > 1e-12)) {
    throw DegenerateDataError("pooled data has no variance; pca is undefined");
  }

  std::vector<double> v1, v2;
  double l1 = 0.0, l2 = 0.0;
  if (!power_iteration(cov, nullptr, v1, l1)) {
    throw DegenerateDataError("pooled data has no variance; pca is undefined");
  }
  fix_sign(v1);

  if (l2 = l1; !power_iteration(cov, &v1, v2, l2) || l2 < 1e-12 * l1) {
    // Collinear pooled data: the second direction carries nothing. Pick the
    // lowest-index axis with an orthogonal remainder so output stays defined.
    l2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      v2.assign(d, 0.0);
      v2[i] = 1.0;
      orthogonalize_against(v2, v1);
      const double nrm = norm(v2);
      if (nrm > 1e-6) {
        for (double& x : v2) x /= nrm;
        break;
      }
    }
  }
  fix_sign(v2);

  Pca2d out;
  out.components = Matrix(2, d);
  for (std::size_t j = 0; j < d; ++j) {
    out.components(0, j) = v1[j];
    out.components(1, j) = v2[j];
  }
  l2 = std::min(l2, l1);  // ties can wobble past l1 by rounding
  out.explained_variance = {std::clamp(l1 / trace, 0.0, 1.0), std::clamp(l2 / trace, 0.0, 1.0)};

  auto project = [&](const Matrix& m) {
    Matrix coords(m.rows(), 2);
    for (std::size_t i = 0; i < m.rows(); ++i) {
      double c1 = 0.0, c2 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double x = m(i, j) - mean[j];
        c1 += x * v1[j];
        c2 += x * v2[j];
      }
      coords(i, 0) = c1;
      coords(i, 1) = c2;
    }
    return coords;
  };
  out.coords_a = project(a);
  out.coords_b = project(b);
  return out;
}

double overlap_fraction(const Matrix& a, const Matrix& b, std::size_t k) {
  if (a.cols() != b.cols()) {
    throw DimensionError("populations must share the feature dimension");
  }
  const std::size_t p = a.rows(), q = b.rows();
  const std::size_t n = p + q;
  if (k < 1 || k >= n) {
    throw ParameterError("neighbor count must be in [1, " + std::to_string(n - 1) +
                         "], got " + std::to_string(k));
  }
  const std::size_t d = a.cols();
  auto point = [&](std::size_t idx, std::size_t j) {
    return idx < p ? a(idx, j) : b(idx - p, j);
  };
  auto sq_dist = [&](std::size_t x, std::size_t y) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = point(x, j) - point(y, j);
      s += diff * diff;
    }
    return s;
  };

  double hits_a = 0.0, hits_b = 0.0;
  std::vector<std::pair<double, std::size_t>> order(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t w = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      order[w++] = {sq_dist(i, j), j};
    }
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                      order.end());
    bool cross = false;
    for (std::size_t r = 0; r < k; ++r) {
      const bool neighbor_in_b = order[r].second >= p;
      if ((i < p && neighbor_in_b) || (i >= p && !neighbor_in_b)) {
        cross = true;
        break;
      }
    }
    if (cross) {
      (i < p ? hits_a : hits_b) += 1.0;
    }
  }
  return 0.5 * (hits_a / static_cast<double>(p) + hits_b / static_cast<double>(q));
}

GapReport gap_report(const Matrix& a, const Matrix& b, std::size_t k) {
  if (a.rows() == 0 || b.rows() == 0) {
    throw ContractError("gap report requires nonempty populations");
  }
  GapReport r;
  const auto ca = mean_pool(a);
  const auto cb = mean_pool(b);
  double cd = 0.0;
  for (std::size_t j = 0; j < ca.size(); ++j) {
    const double diff = ca[j] - cb[j];
    cd += diff * diff;
  }
  r.centroid_distance = std::sqrt(cd);

  auto spread = [&](const Matrix& m, const std::vector<double>& c) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      double sq = 0.0;
      for (std::size_t j = 0; j < m.cols(); ++j) {
        const double diff = m(i, j) - c[j];
        sq += diff * diff;
      }
      s += std::sqrt(sq);
    }
    return s / static_cast<double>(m.rows());
  };
  const double mean_spread = 0.5 * (spread(a, ca) + spread(b, cb));
  if (!(mean_spread > 0.0)) {
    throw DegenerateDataError("populations have zero spread; normalized distance undefined");
  }
  r.normalized_centroid_distance = r.centroid_distance / mean_spread;

  Pca2d pca = pca_2d(a, b);
  r.pca_coords_a = pca.coords_a;
  r.pca_coords_b = pca.coords_b;
  r.explained_variance = pca.explained_variance;
  r.overlap_fraction = overlap_fraction(a, b, k);
  return r;
}

}  // namespace dali
