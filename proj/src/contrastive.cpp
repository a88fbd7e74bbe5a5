#include "dali/contrastive.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "dali/errors.hpp"

namespace dali {

namespace {

// Row-normalizes m, recording the original norms.
Matrix normalize_rows(const Matrix& m, std::vector<double>& norms, const char* name) {
  norms.assign(m.rows(), 0.0);
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) sq += m(i, j) * m(i, j);
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0)) {
      throw DegenerateDataError(std::string("cannot normalize zero ") + name +
                                " embedding at row " + std::to_string(i));
    }
    norms[i] = norm;
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) / norm;
  }
  return out;
}

double log_sum_exp(const std::vector<double>& v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

// Unnormalized-input gradient from the normalized-direction gradient:
// d(u)/d(a) with u = a/|a| projects out the radial component.
Matrix through_normalization(const Matrix& d_unit, const Matrix& unit,
                             const std::vector<double>& norms) {
  Matrix out(d_unit.rows(), d_unit.cols());
  for (std::size_t i = 0; i < d_unit.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < d_unit.cols(); ++j) dot += d_unit(i, j) * unit(i, j);
    for (std::size_t j = 0; j < d_unit.cols(); ++j) {
      out(i, j) = (d_unit(i, j) - dot * unit(i, j)) / norms[i];
    }
  }
  return out;
}

}  // namespace

NodePtr infonce_loss(const NodePtr& audio_means, const NodePtr& image_means,
                     const ContrastiveConfig& cfg) {
  if (!(cfg.temperature > 0.0)) {
    throw ParameterError("contrastive temperature must be positive, got " +
                         std::to_string(cfg.temperature));
  }
  require_same_shape(audio_means->value, image_means->value, "contrastive batch");
  const std::size_t b = audio_means->value.rows();
  if (b < 2) {
    throw BatchError("contrastive loss needs a batch of at least 2 samples, got " +
                     std::to_string(b));
  }

  std::vector<double> norms_a, norms_i;
  const Matrix u = normalize_rows(audio_means->value, norms_a, "audio");
  const Matrix v = normalize_rows(image_means->value, norms_i, "image");

  // Logits: cosine similarity over temperature.
  Matrix s = scale(matmul(u, transpose(v)), 1.0 / cfg.temperature);

  std::vector<double> row_lse(b), col_lse(b);
  {
    std::vector<double> tmp(b);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < b; ++j) tmp[j] = s(i, j);
      row_lse[i] = log_sum_exp(tmp);
    }
    for (std::size_t j = 0; j < b; ++j) {
      for (std::size_t i = 0; i < b; ++i) tmp[i] = s(i, j);
      col_lse[j] = log_sum_exp(tmp);
    }
  }
  double loss_rows = 0.0, loss_cols = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    loss_rows += row_lse[i] - s(i, i);
    loss_cols += col_lse[i] - s(i, i);
  }
  loss_rows /= static_cast<double>(b);
  loss_cols /= static_cast<double>(b);

  Matrix value(1, 1);
  value(0, 0) = cfg.symmetric ? 0.5 * (loss_rows + loss_cols) : loss_rows;

  const double w_row = cfg.symmetric ? 0.5 : 1.0;
  const double w_col = cfg.symmetric ? 0.5 : 0.0;
  const double inv_t = 1.0 / cfg.temperature;

  return make_op_node(
      std::move(value), {audio_means, image_means},
      [b, u, v, s, row_lse, col_lse, norms_a, norms_i, w_row, w_col, inv_t](Node& node) {
        const double g = node.grad(0, 0);
        // d loss / d s = (row softmax - I) * w_row / b + (col softmax - I) * w_col / b.
        Matrix ds(b, b);
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t j = 0; j < b; ++j) {
            const double p = std::exp(s(i, j) - row_lse[i]);
            const double q = std::exp(s(i, j) - col_lse[j]);
            const double target = i == j ? 1.0 : 0.0;
            ds(i, j) = g * (w_row * (p - target) + w_col * (q - target)) /
                       static_cast<double>(b);
          }
        }
        const Matrix du = scale(matmul(ds, v), inv_t);
        const Matrix dv = scale(matmul(transpose(ds), u), inv_t);
        accumulate_grad(*node.parents[0], through_normalization(du, u, norms_a));
        accumulate_grad(*node.parents[1], through_normalization(dv, v, norms_i));
      });
}

double infonce_loss_value(const Matrix& audio_means, const Matrix& image_means,
                          const ContrastiveConfig& cfg) {
  return infonce_loss(constant(audio_means), constant(image_means), cfg)->value(0, 0);
}

}  // namespace dali
