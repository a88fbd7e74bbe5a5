#pragma once

#include <cstddef>
#include <vector>

#include "dali/matrix.hpp"

namespace dali {

// Discrete measure: one point per row, one probability weight per point.
struct WeightedPointCloud {
  Matrix points;                // n x d
  std::vector<double> weights;  // nonnegative, sums to 1 within 1e-9
};

// Validates shape, nonnegativity, finiteness and unit mass.
WeightedPointCloud make_cloud(Matrix points, std::vector<double> weights);
WeightedPointCloud uniform_cloud(Matrix points);

struct CostMatrix {
  Matrix entries;  // n x m, nonnegative
};

// entries(i, j) = squared L2 distance between x row i and y row j.
CostMatrix cost_matrix(const Matrix& x, const Matrix& y);

struct TransportPlan {
  Matrix coupling;  // n x m, row sums = alpha, col sums = beta
  double total_cost = 0.0;
  // Optimal LP duals; first active row potential fixed to 0. These are the
  // sensitivities d(total_cost)/d(weight) almost everywhere.
  std::vector<double> row_potentials;
  std::vector<double> col_potentials;
  std::size_t iterations = 0;
};

// Exact optimal coupling under squared-L2 ground cost, solved with a
// transportation simplex. Deterministic: pivot ties break at the lowest
// row-major index.
TransportPlan emd_exact(const WeightedPointCloud& a, const WeightedPointCloud& b);

// Same solver on a caller-supplied cost matrix (weights as in emd_exact).
TransportPlan solve_transport(const std::vector<double>& a, const std::vector<double>& b,
                              const Matrix& cost);

struct EmdGradients {
  TransportPlan plan;
  Matrix dx;  // d(total_cost)/dx with the coupling held fixed
  Matrix dy;
};

// Envelope gradient of emd_exact(a, b).total_cost with respect to the point
// coordinates: dx_i = sum_j coupling(i,j) * 2 * (x_i - y_j).
EmdGradients emd_loss_grad(const WeightedPointCloud& a, const WeightedPointCloud& b);

}  // namespace dali
