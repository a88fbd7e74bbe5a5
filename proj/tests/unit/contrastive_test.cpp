#include "dali/contrastive.hpp"

#include <cmath>
#include <vector>

#include <doctest.h>

#include "dali/errors.hpp"
#include "dali/matrix.hpp"
#include "dali/rng.hpp"

namespace {

dali::Matrix random_batch(std::size_t b, std::size_t d, dali::Rng& rng) {
  dali::Matrix m(b, d);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Independent loop-level oracle: normalize, cosine logits, per-row and
// per-column log-sum-exp cross entropy against the diagonal.
double infonce_oracle(const dali::Matrix& a, const dali::Matrix& v, double t,
                      bool symmetric) {
  const std::size_t b = a.rows(), d = a.cols();
  std::vector<std::vector<double>> s(b, std::vector<double>(b, 0.0));
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      double dot = 0.0, na = 0.0, nv = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        dot += a(i, k) * v(j, k);
        na += a(i, k) * a(i, k);
        nv += v(j, k) * v(j, k);
      }
      s[i][j] = dot / (std::sqrt(na) * std::sqrt(nv) * t);
    }
  }
  auto lse = [](const std::vector<double>& row) {
    double mx = row[0];
    for (double x : row) mx = std::max(mx, x);
    double sum = 0.0;
    for (double x : row) sum += std::exp(x - mx);
    return mx + std::log(sum);
  };
  double rows = 0.0, cols = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    rows += lse(s[i]) - s[i][i];
    std::vector<double> col(b);
    for (std::size_t k = 0; k < b; ++k) col[k] = s[k][i];
    cols += lse(col) - s[i][i];
  }
  rows /= static_cast<double>(b);
  cols /= static_cast<double>(b);
  return symmetric ? 0.5 * (rows + cols) : rows;
}

// Orthogonal d x d matrix from Gram-Schmidt over random rows.
dali::Matrix random_rotation(std::size_t d, dali::Rng& rng) {
  dali::Matrix q(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    std::vector<double> row(d);
    for (std::size_t j = 0; j < d; ++j) row[j] = rng.normal();
    for (std::size_t k = 0; k < i; ++k) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += row[j] * q(k, j);
      for (std::size_t j = 0; j < d; ++j) row[j] -= dot * q(k, j);
    }
    double norm = 0.0;
    for (double x : row) norm += x * x;
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < d; ++j) q(i, j) = row[j] / norm;
  }
  return q;
}

}  // namespace

TEST_CASE("identical embeddings give the uniform-logit loss ln 2") {
  dali::Matrix a = dali::Matrix::from_rows({{0.3, -0.1, 0.8}, {0.3, -0.1, 0.8}});
  dali::ContrastiveConfig cfg;
  CHECK(dali::infonce_loss_value(a, a, cfg) ==
        doctest::Approx(0.6931471805599453).epsilon(1e-14));
}

TEST_CASE("equal similarities cost exactly ln B") {
  // Every audio row identical and every image row identical: all logits tie.
  const std::size_t b = 5;
  dali::Matrix a(b, 3), v(b, 3);
  for (std::size_t i = 0; i < b; ++i) {
    a(i, 0) = 1.0;
    a(i, 2) = -2.0;
    v(i, 1) = 0.4;
    v(i, 2) = 0.3;
  }
  dali::ContrastiveConfig cfg;
  CHECK(dali::infonce_loss_value(a, v, cfg) ==
        doctest::Approx(std::log(5.0)).epsilon(1e-14));
}

TEST_CASE("orthogonal matched pairs drive the loss to zero as temperature vanishes") {
  dali::Matrix a(3, 3), v(3, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    a(i, i) = 2.0;   // norms differ from the companions on purpose
    v(i, i) = 0.5;   // normalization must erase the scales
  }
  dali::ContrastiveConfig cfg;
  cfg.temperature = 0.01;
  CHECK(dali::infonce_loss_value(a, v, cfg) >= 0.0);
  CHECK(dali::infonce_loss_value(a, v, cfg) < 1e-12);
}

TEST_CASE("loss matches the direct log-sum-exp oracle") {
  dali::Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_batch(4, 3, rng);
    auto v = random_batch(4, 3, rng);
    dali::ContrastiveConfig cfg;
    cfg.temperature = 0.07 + 0.4 * rng.uniform();
    cfg.symmetric = true;
    CHECK(dali::infonce_loss_value(a, v, cfg) ==
          doctest::Approx(infonce_oracle(a, v, cfg.temperature, true)).epsilon(1e-12));
    cfg.symmetric = false;
    CHECK(dali::infonce_loss_value(a, v, cfg) ==
          doctest::Approx(infonce_oracle(a, v, cfg.temperature, false)).epsilon(1e-12));
  }
}

TEST_CASE("loss is nonnegative") {
  dali::Rng rng(32);
  dali::ContrastiveConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_batch(5, 4, rng);
    auto v = random_batch(5, 4, rng);
    CHECK(dali::infonce_loss_value(a, v, cfg) >= 0.0);
  }
}

TEST_CASE("loss is invariant under a common rotation of both embedding sets") {
  dali::Rng rng(33);
  auto a = random_batch(4, 4, rng);
  auto v = random_batch(4, 4, rng);
  auto q = random_rotation(4, rng);
  dali::ContrastiveConfig cfg;
  const double base = dali::infonce_loss_value(a, v, cfg);
  const double rotated = dali::infonce_loss_value(dali::matmul(a, q), dali::matmul(v, q), cfg);
  CHECK(rotated == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("contrastive input contract violations raise typed errors") {
  dali::Rng rng(34);
  dali::ContrastiveConfig cfg;
  auto a = random_batch(1, 3, rng);
  CHECK_THROWS_AS(dali::infonce_loss_value(a, a, cfg), dali::BatchError);
  auto b = random_batch(3, 3, rng);
  auto c = random_batch(3, 4, rng);
  CHECK_THROWS_AS(dali::infonce_loss_value(b, c, cfg), dali::DimensionError);
  dali::Matrix with_zero = random_batch(3, 3, rng);
  with_zero(1, 0) = with_zero(1, 1) = with_zero(1, 2) = 0.0;
  CHECK_THROWS_AS(dali::infonce_loss_value(with_zero, b, cfg), dali::DegenerateDataError);
  CHECK_THROWS_AS(dali::infonce_loss_value(b, with_zero, cfg), dali::DegenerateDataError);
  dali::ContrastiveConfig bad;
  bad.temperature = 0.0;
  CHECK_THROWS_AS(dali::infonce_loss_value(b, b, bad), dali::ParameterError);
}

TEST_CASE("contrastive gradients pass finite differences on both inputs") {
  dali::Rng rng(35);
  for (int trial = 0; trial < 10; ++trial) {
    auto a = random_batch(4, 3, rng);
    auto v = random_batch(4, 3, rng);
    dali::ContrastiveConfig cfg;
    cfg.temperature = 0.5;  // keep logits moderate so FD stays well-conditioned
    cfg.symmetric = (trial % 2 == 0);
    auto f_audio = [&](const dali::NodePtr& p) {
      return dali::infonce_loss(p, dali::constant(v), cfg);
    };
    CHECK(dali::grad_check(f_audio, a) < 1e-5);
    auto f_image = [&](const dali::NodePtr& p) {
      return dali::infonce_loss(dali::constant(a), p, cfg);
    };
    CHECK(dali::grad_check(f_image, v) < 1e-5);
  }
}
