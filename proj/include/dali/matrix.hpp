#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace dali {

class Rng;

// Dense row-major matrix of 64-bit floats. Every operation below validates
// shapes and guarantees a finite result; NaN/Inf never survives past a
// public entry point.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

void require_finite(const Matrix& m, const char* what);
void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix relu(const Matrix& a);
double sum(const Matrix& a);
double frobenius_dot(const Matrix& a, const Matrix& b);
Matrix colwise_mean(const Matrix& a);  // 1 x cols
Matrix rowwise_mean(const Matrix& a);  // rows x 1

// D(i, j) = squared L2 distance between row i of x and row j of y.
Matrix pairwise_sq_dists(const Matrix& x, const Matrix& y);

// Entries drawn uniformly from [-s, s].
Matrix random_uniform(std::size_t rows, std::size_t cols, double s, Rng& rng);

}  // namespace dali
