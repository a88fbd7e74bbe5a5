#pragma once

#include <cstddef>
#include <vector>

#include "dali/autodiff.hpp"
#include "dali/matrix.hpp"

namespace dali {

inline constexpr std::size_t kDefaultKernelCount = 5;

// RBF mixture: k(a, b) = sum_k exp(-||a - b||^2 / bandwidth_k).
struct KernelMixtureSpec {
  std::vector<double> bandwidths;  // positive, nonempty
};

// Bandwidths {k * m : k = 1..K} where m is the mean squared L2 distance over
// ordered distinct pairs of the pooled sample.
KernelMixtureSpec bandwidths_from_data(const Matrix& x, const Matrix& y,
                                       std::size_t K = kDefaultKernelCount);

struct MmdResult {
  double mmd_squared = 0.0;
  std::vector<double> per_kernel;  // sums to mmd_squared
};

// Biased (V-statistic) estimator, nonnegative by construction and exactly
// zero on identical inputs.
MmdResult mmd_squared(const Matrix& x, const Matrix& y, const KernelMixtureSpec& spec);

// Same estimator as a scalar graph node with an analytic backward rule over
// both token sets.
NodePtr mmd_loss(const NodePtr& x, const NodePtr& y, const KernelMixtureSpec& spec);

}  // namespace dali
