#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "dali/matrix.hpp"

namespace dali {

// Modality-gap diagnostics between two embedded populations.
struct GapReport {
  double centroid_distance = 0.0;
  // Centroid distance over the mean within-population spread, so methods
  // with different embedding scales stay comparable.
  double normalized_centroid_distance = 0.0;
  Matrix pca_coords_a;  // p x 2
  Matrix pca_coords_b;  // q x 2
  std::array<double, 2> explained_variance{0.0, 0.0};
  double overlap_fraction = 0.0;
};

// Columnwise mean of a nonempty token matrix.
std::vector<double> mean_pool(const Matrix& tokens);

// Stacks per-sample mean-pooled rows: one row per n_tokens x d block.
Matrix pool_samples(const std::vector<Matrix>& samples);

struct Pca2d {
  Matrix coords_a;
  Matrix coords_b;
  std::array<double, 2> explained_variance{0.0, 0.0};
  Matrix components;  // 2 x d, unit rows, first nonzero loading positive
};

// Top-2 principal directions of the pooled, centered populations via power
// iteration with deflation (tolerance 1e-10, fixed cap). Collinear data gets
// explained variance [1, 0]; zero-variance data is degenerate.
Pca2d pca_2d(const Matrix& a, const Matrix& b);

// Fraction of points whose k nearest pooled neighbors (self excluded, ties by
// index) include at least one point of the other population, averaged over
// the two populations.
double overlap_fraction(const Matrix& a, const Matrix& b, std::size_t k);

GapReport gap_report(const Matrix& a, const Matrix& b, std::size_t k);

}  // namespace dali
