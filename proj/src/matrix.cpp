#include "dali/matrix.hpp"

#include <cmath>
#include <string>

#include "dali/errors.hpp"
#include "dali/rng.hpp"

namespace dali {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m;
  m.rows_ = rows.size();
  m.cols_ = rows.size() == 0 ? 0 : rows.begin()->size();
  m.data_.reserve(m.rows_ * m.cols_);
  for (const auto& row : rows) {
    if (row.size() != m.cols_) {
      throw DimensionError("matrix literal has ragged rows");
    }
    m.data_.insert(m.data_.end(), row.begin(), row.end());
  }
  return m;
}

void require_finite(const Matrix& m, const char* what) {
  for (double v : m.data()) {
    if (!std::isfinite(v)) {
      throw ContractError(std::string(what) + ": non-finite entry");
    }
  }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shapes " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + " differ");
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                         std::to_string(b.rows()) + " differ");
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) {
        out(i, j) += aik * b(k, j);
      }
    }
  }
  require_finite(out, "matmul");
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      out(j, i) = a(i, j);
    }
  }
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  require_finite(out, "add");
  return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  require_finite(out, "sub");
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.data()[i];
  require_finite(out, "hadamard");
  return out;
}

Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.data()) v *= s;
  require_finite(out, "scale");
  return out;
}

Matrix relu(const Matrix& a) {
  Matrix out = a;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

double sum(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return s;
}

double frobenius_dot(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "frobenius_dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

Matrix colwise_mean(const Matrix& a) {
  if (a.rows() == 0) throw ContractError("colwise_mean: empty matrix");
  Matrix out(1, a.cols());
  for (std::size_t j = 0; j < a.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, j);
    out(0, j) = s / static_cast<double>(a.rows());
  }
  return out;
}

Matrix rowwise_mean(const Matrix& a) {
  if (a.cols() == 0) throw ContractError("rowwise_mean: empty matrix");
  Matrix out(a.rows(), 1);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j);
    out(i, 0) = s / static_cast<double>(a.cols());
  }
  return out;
}

Matrix pairwise_sq_dists(const Matrix& x, const Matrix& y) {
  if (x.cols() != y.cols()) {
    throw DimensionError("pairwise_sq_dists: feature dimensions " + std::to_string(x.cols()) +
                         " and " + std::to_string(y.cols()) + " differ");
  }
  Matrix out(x.rows(), y.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < y.rows(); ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) {
        const double diff = x(i, k) - y(j, k);
        d += diff * diff;
      }
      out(i, j) = d;
    }
  }
  require_finite(out, "pairwise_sq_dists");
  return out;
}

Matrix random_uniform(std::size_t rows, std::size_t cols, double s, Rng& rng) {
  Matrix out(rows, cols);
  for (double& v : out.data()) v = rng.uniform(-s, s);
  return out;
}

}  // namespace dali
