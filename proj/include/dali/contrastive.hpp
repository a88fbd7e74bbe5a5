#pragma once

#include "dali/autodiff.hpp"
#include "dali/matrix.hpp"

namespace dali {

struct ContrastiveConfig {
  double temperature = 0.07;
  bool symmetric = true;  // average both softmax directions
};

// InfoNCE over a batch of paired embeddings (one row per sample). Rows are
// L2-normalized internally; logits are cosine similarities over temperature,
// targets the diagonal. Symmetric mode averages the row- and column-direction
// cross entropies. Returns a scalar node with an analytic backward rule.
NodePtr infonce_loss(const NodePtr& audio_means, const NodePtr& image_means,
                     const ContrastiveConfig& cfg);

double infonce_loss_value(const Matrix& audio_means, const Matrix& image_means,
                          const ContrastiveConfig& cfg);

}  // namespace dali
