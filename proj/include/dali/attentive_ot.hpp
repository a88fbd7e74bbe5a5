#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "dali/autodiff.hpp"
#include "dali/matrix.hpp"
#include "dali/rng.hpp"

namespace dali {

// Projections of the two cross-attention directions. The audio-query
// direction uses wq_a against the image keys/values (wk_i, wv_i); the image
// query direction mirrors it with the remaining three matrices.
struct CrossAttentionParams {
  Matrix wq_a, wk_a, wv_a;  // audio-side projections, d x d
  Matrix wq_i, wk_i, wv_i;  // image-side projections, d x d
  double tau = 20.0;        // outer softmax temperature
};

// Shared head dimension d; throws on shape mismatch or tau <= 0.
std::size_t attention_dim(const CrossAttentionParams& params);

// Seeded uniform init in [-1/sqrt(d), 1/sqrt(d)]; keeps early weights close
// to uniform so the warmup epoch hands over smoothly.
CrossAttentionParams init_attention(std::size_t d, double tau, Rng& rng);

// Node-wrapped projections so gradients can flow into them during training.
struct AttentionNodes {
  NodePtr wq_a, wk_a, wv_a;
  NodePtr wq_i, wk_i, wv_i;
  double tau = 20.0;
};

AttentionNodes make_attention_nodes(const CrossAttentionParams& params,
                                    bool requires_grad = true);
CrossAttentionParams read_attention_nodes(const AttentionNodes& nodes);

struct AttentionWeightNodes {
  NodePtr alpha;  // 1 x n_a probability row
  NodePtr beta;   // 1 x n_i probability row
};

// Marginal weights from scaled dot-product cross attention: per-token
// attention rows over the other modality, context mean over the feature
// dimension, then a temperature softmax across tokens. Differentiable
// end-to-end through tokens and projections.
AttentionWeightNodes attention_weight_nodes(const NodePtr& audio, const NodePtr& image,
                                            const AttentionNodes& params);

// Value-level convenience over constant nodes.
std::pair<std::vector<double>, std::vector<double>> attention_weights(
    const Matrix& audio, const Matrix& image, const CrossAttentionParams& params);

// H(w) = -sum w_i ln w_i with 0 ln 0 := 0. Input must be a probability
// vector: nonnegative, unit sum within 1e-9.
double shannon_entropy(const std::vector<double>& w);
NodePtr entropy_node(const NodePtr& w);  // w: 1 x n probability row

// Exact transport cost between the weighted token clouds as a graph node.
// Backward holds the optimal coupling fixed: point gradients through the
// squared-distance cost entries, weight gradients through the LP dual
// potentials (the a.e.-exact sensitivities d cost / d marginal).
NodePtr emd_cost_node(const NodePtr& audio, const NodePtr& image, const NodePtr& alpha,
                      const NodePtr& beta);

// Entropy-weight schedule: a uniform-weight warmup epoch, then a linear ramp
// start -> end finishing at ramp_epochs, constant end afterwards.
struct LambdaSchedule {
  double start = 500.0;
  double end = 100.0;
  std::size_t ramp_epochs = 5;
  bool uniform_first_epoch = true;
};

struct LambdaPhase {
  bool uniform_weights = false;
  double lambda = 0.0;
};

LambdaPhase lambda_at(std::size_t epoch, const LambdaSchedule& schedule);

struct AttentiveLossConfig {
  double lambda = 100.0;
  LambdaSchedule lambda_schedule;
};

// cost(A, I, alpha, beta) - lambda * (H(alpha) + H(beta)) with the weights
// produced by attention_weight_nodes. lambda < 0 -> parameter error.
NodePtr attentive_ot_loss(const NodePtr& audio, const NodePtr& image,
                          const AttentionNodes& params, double lambda);
double attentive_ot_loss_value(const Matrix& audio, const Matrix& image,
                               const CrossAttentionParams& params, double lambda);

}  // namespace dali
