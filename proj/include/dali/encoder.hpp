#pragma once

#include <cstddef>

#include "dali/autodiff.hpp"
#include "dali/matrix.hpp"
#include "dali/rng.hpp"

namespace dali {

// Token-wise 2-layer MLP, d_in -> h (ReLU) -> d, applied independently to
// each row of its input.
struct EncoderParams {
  Matrix w1;  // h x d_in
  Matrix b1;  // 1 x h
  Matrix w2;  // d x h
  Matrix b2;  // 1 x d
};

// Throws on inconsistent shapes or nonfinite entries.
void validate_encoder(const EncoderParams& params);

// Seeded uniform init: w1 in [-s1, s1], w2 in [-s2, s2], zero biases.
EncoderParams init_encoder(std::size_t d_in, std::size_t hidden, std::size_t d_out, Rng& rng,
                           double s1, double s2);

// relu(raw * w1' + b1) * w2' + b2, one token per row.
Matrix encode(const EncoderParams& params, const Matrix& raw);

struct EncoderNodes {
  NodePtr w1, b1, w2, b2;
};

EncoderNodes make_encoder_nodes(const EncoderParams& params, bool requires_grad = true);
EncoderParams read_encoder_nodes(const EncoderNodes& nodes);
NodePtr encode_node(const EncoderNodes& nodes, const NodePtr& raw);

}  // namespace dali
