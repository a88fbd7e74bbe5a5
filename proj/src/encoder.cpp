#include "dali/encoder.hpp"

#include <string>

#include "dali/errors.hpp"

namespace dali {

void validate_encoder(const EncoderParams& params) {
  const std::size_t h = params.w1.rows();
  const std::size_t d_out = params.w2.rows();
  if (h == 0 || params.w1.cols() == 0 || d_out == 0) {
    throw DimensionError("encoder layers must be nonempty");
  }
  if (params.b1.rows() != 1 || params.b1.cols() != h) {
    throw DimensionError("encoder hidden bias must be 1x" + std::to_string(h) + ", got " +
                         std::to_string(params.b1.rows()) + "x" +
                         std::to_string(params.b1.cols()));
  }
  if (params.w2.cols() != h) {
    throw DimensionError("encoder output layer expects " + std::to_string(h) +
                         " hidden units, got " + std::to_string(params.w2.cols()));
  }
  if (params.b2.rows() != 1 || params.b2.cols() != d_out) {
    throw DimensionError("encoder output bias must be 1x" + std::to_string(d_out) + ", got " +
                         std::to_string(params.b2.rows()) + "x" +
                         std::to_string(params.b2.cols()));
  }
  require_finite(params.w1, "encoder w1");
  require_finite(params.b1, "encoder b1");
  require_finite(params.w2, "encoder w2");
  require_finite(params.b2, "encoder b2");
}

EncoderParams init_encoder(std::size_t d_in, std::size_t hidden, std::size_t d_out, Rng& rng,
                           double s1, double s2) {
  if (d_in == 0 || hidden == 0 || d_out == 0) {
    throw ParameterError("encoder dimensions must be positive");
  }
  EncoderParams p;
  p.w1 = random_uniform(hidden, d_in, s1, rng);
  p.b1 = Matrix(1, hidden);
  p.w2 = random_uniform(d_out, hidden, s2, rng);
  p.b2 = Matrix(1, d_out);
  return p;
}

Matrix encode(const EncoderParams& params, const Matrix& raw) {
  validate_encoder(params);
  if (raw.cols() != params.w1.cols()) {
    throw DimensionError("encoder expects " + std::to_string(params.w1.cols()) +
                         " input features, got " + std::to_string(raw.cols()));
  }
  Matrix hidden = matmul(raw, transpose(params.w1));
  for (std::size_t i = 0; i < hidden.rows(); ++i) {
    for (std::size_t j = 0; j < hidden.cols(); ++j) {
      hidden(i, j) = std::max(0.0, hidden(i, j) + params.b1(0, j));
    }
  }
  Matrix out = matmul(hidden, transpose(params.w2));
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += params.b2(0, j);
  }
  require_finite(out, "encoded tokens");
  return out;
}

EncoderNodes make_encoder_nodes(const EncoderParams& params, bool requires_grad) {
  validate_encoder(params);
  auto wrap = [&](const Matrix& m) { return requires_grad ? leaf(m) : constant(m); };
  return {wrap(params.w1), wrap(params.b1), wrap(params.w2), wrap(params.b2)};
}

EncoderParams read_encoder_nodes(const EncoderNodes& nodes) {
  return {nodes.w1->value, nodes.b1->value, nodes.w2->value, nodes.b2->value};
}

NodePtr encode_node(const EncoderNodes& nodes, const NodePtr& raw) {
  if (raw->value.cols() != nodes.w1->value.cols()) {
    throw DimensionError("encoder expects " + std::to_string(nodes.w1->value.cols()) +
                         " input features, got " + std::to_string(raw->value.cols()));
  }
  auto hidden = relu(add_rowvec(matmul(raw, transpose(nodes.w1)), nodes.b1));
  return add_rowvec(matmul(hidden, transpose(nodes.w2)), nodes.b2);
}

}  // namespace dali
