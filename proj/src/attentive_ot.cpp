#include "dali/attentive_ot.hpp"

#include <cmath>
#include <string>

#include "dali/errors.hpp"
#include "dali/ot.hpp"

namespace dali {

namespace {

void require_square(const Matrix& m, std::size_t d, const char* name) {
  if (m.rows() != d || m.cols() != d) {
    throw DimensionError(std::string("attention projection ") + name + " must be " +
                         std::to_string(d) + "x" + std::to_string(d) + ", got " +
                         std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  require_finite(m, name);
}

std::vector<double> row_to_vector(const Matrix& row) {
  std::vector<double> out(row.cols());
  for (std::size_t j = 0; j < row.cols(); ++j) out[j] = row(0, j);
  return out;
}

}  // namespace

std::size_t attention_dim(const CrossAttentionParams& params) {
  const std::size_t d = params.wq_a.rows();
  if (d == 0) throw DimensionError("attention projections must be nonempty");
  require_square(params.wq_a, d, "wq_a");
  require_square(params.wk_a, d, "wk_a");
  require_square(params.wv_a, d, "wv_a");
  require_square(params.wq_i, d, "wq_i");
  require_square(params.wk_i, d, "wk_i");
  require_square(params.wv_i, d, "wv_i");
  if (!(params.tau > 0.0)) {
    throw ParameterError("attention temperature must be positive, got " +
                         std::to_string(params.tau));
  }
  return d;
}

CrossAttentionParams init_attention(std::size_t d, double tau, Rng& rng) {
  if (d == 0) throw ParameterError("attention head dimension must be positive");
  if (!(tau > 0.0)) {
    throw ParameterError("attention temperature must be positive, got " + std::to_string(tau));
  }
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  CrossAttentionParams p;
  p.wq_a = random_uniform(d, d, s, rng);
  p.wk_a = random_uniform(d, d, s, rng);
  p.wv_a = random_uniform(d, d, s, rng);
  p.wq_i = random_uniform(d, d, s, rng);
  p.wk_i = random_uniform(d, d, s, rng);
  p.wv_i = random_uniform(d, d, s, rng);
  p.tau = tau;
  return p;
}

AttentionNodes make_attention_nodes(const CrossAttentionParams& params, bool requires_grad) {
  attention_dim(params);
  auto wrap = [&](const Matrix& m) { return requires_grad ? leaf(m) : constant(m); };
  AttentionNodes n;
  n.wq_a = wrap(params.wq_a);
  n.wk_a = wrap(params.wk_a);
  n.wv_a = wrap(params.wv_a);
  n.wq_i = wrap(params.wq_i);
  n.wk_i = wrap(params.wk_i);
  n.wv_i = wrap(params.wv_i);
  n.tau = params.tau;
  return n;
}

CrossAttentionParams read_attention_nodes(const AttentionNodes& nodes) {
  CrossAttentionParams p;
  p.wq_a = nodes.wq_a->value;
  p.wk_a = nodes.wk_a->value;
  p.wv_a = nodes.wv_a->value;
  p.wq_i = nodes.wq_i->value;
  p.wk_i = nodes.wk_i->value;
  p.wv_i = nodes.wv_i->value;
  p.tau = nodes.tau;
  return p;
}

namespace {

// One attention direction: queries from `query_tokens`, keys/values from
// `context_tokens`; returns the 1 x n_query probability row.
NodePtr one_direction(const NodePtr& query_tokens, const NodePtr& context_tokens,
                      const NodePtr& wq, const NodePtr& wk, const NodePtr& wv, double tau) {
  const std::size_t d = wq->value.rows();
  auto q = matmul(query_tokens, transpose(wq));    // n_q x d
  auto k = matmul(context_tokens, transpose(wk));  // n_c x d
  auto v = matmul(context_tokens, transpose(wv));  // n_c x d
  auto scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
  auto attended = matmul(row_softmax(scores), v);  // n_q x d
  auto pooled = transpose(mean_axis(attended, Axis::cols));  // 1 x n_q
  return softmax_temp(pooled, tau);
}

}  // namespace

AttentionWeightNodes attention_weight_nodes(const NodePtr& audio, const NodePtr& image,
                                            const AttentionNodes& params) {
  const std::size_t d = params.wq_a->value.rows();
  if (audio->value.cols() != d || image->value.cols() != d) {
    throw DimensionError("token feature dimension must match attention head dimension " +
                         std::to_string(d) + ", got audio " +
                         std::to_string(audio->value.cols()) + ", image " +
                         std::to_string(image->value.cols()));
  }
  if (audio->value.rows() == 0 || image->value.rows() == 0) {
    throw DimensionError("token sets must be nonempty");
  }
  AttentionWeightNodes w;
  w.alpha = one_direction(audio, image, params.wq_a, params.wk_i, params.wv_i, params.tau);
  w.beta = one_direction(image, audio, params.wq_i, params.wk_a, params.wv_a, params.tau);
  return w;
}

std::pair<std::vector<double>, std::vector<double>> attention_weights(
    const Matrix& audio, const Matrix& image, const CrossAttentionParams& params) {
  auto nodes = make_attention_nodes(params, /*requires_grad=*/false);
  auto w = attention_weight_nodes(constant(audio), constant(image), nodes);
  return {row_to_vector(w.alpha->value), row_to_vector(w.beta->value)};
}

namespace {

void check_probability_vector(const std::vector<double>& w) {
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(w[i] >= 0.0)) {
      throw ContractError("entropy input must be nonnegative, got " + std::to_string(w[i]) +
                          " at index " + std::to_string(i));
    }
    sum += w[i];
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ContractError("entropy input must sum to 1, got " + std::to_string(sum));
  }
}

double entropy_value(const std::vector<double>& w) {
  double h = 0.0;
  for (double wi : w) {
    if (wi > 0.0) h -= wi * std::log(wi);
  }
  return h;
}

}  // namespace

double shannon_entropy(const std::vector<double>& w) {
  check_probability_vector(w);
  return entropy_value(w);
}

NodePtr entropy_node(const NodePtr& w) {
  if (w->value.rows() != 1) {
    throw DimensionError("entropy input must be a 1 x n row, got " +
                         std::to_string(w->value.rows()) + "x" +
                         std::to_string(w->value.cols()));
  }
  const std::vector<double> wv = row_to_vector(w->value);
  check_probability_vector(wv);
  Matrix value(1, 1);
  value(0, 0) = entropy_value(wv);
  return make_op_node(std::move(value), {w}, [wv](Node& node) {
    const double g = node.grad(0, 0);
    Matrix dw(1, wv.size());
    for (std::size_t i = 0; i < wv.size(); ++i) {
      // d(-w ln w)/dw = -(ln w + 1); zero entries stay pinned at the corner.
      dw(0, i) = wv[i] > 0.0 ? -g * (std::log(wv[i]) + 1.0) : 0.0;
    }
    accumulate_grad(*node.parents[0], dw);
  });
}

NodePtr emd_cost_node(const NodePtr& audio, const NodePtr& image, const NodePtr& alpha,
                      const NodePtr& beta) {
  if (alpha->value.rows() != 1 || beta->value.rows() != 1) {
    throw DimensionError("marginal weights must be 1 x n rows");
  }
  auto a_cloud = make_cloud(audio->value, row_to_vector(alpha->value));
  auto b_cloud = make_cloud(image->value, row_to_vector(beta->value));
  EmdGradients g = emd_loss_grad(a_cloud, b_cloud);

  Matrix value(1, 1);
  value(0, 0) = g.plan.total_cost;
  Matrix dx = g.dx;
  Matrix dy = g.dy;
  Matrix du(1, g.plan.row_potentials.size());
  for (std::size_t i = 0; i < g.plan.row_potentials.size(); ++i) {
    du(0, i) = g.plan.row_potentials[i];
  }
  Matrix dv(1, g.plan.col_potentials.size());
  for (std::size_t j = 0; j < g.plan.col_potentials.size(); ++j) {
    dv(0, j) = g.plan.col_potentials[j];
  }
  return make_op_node(std::move(value), {audio, image, alpha, beta},
                      [dx, dy, du, dv](Node& node) {
                        const double s = node.grad(0, 0);
                        accumulate_grad(*node.parents[0], scale(dx, s));
                        accumulate_grad(*node.parents[1], scale(dy, s));
                        accumulate_grad(*node.parents[2], scale(du, s));
                        accumulate_grad(*node.parents[3], scale(dv, s));
                      });
}

LambdaPhase lambda_at(std::size_t epoch, const LambdaSchedule& schedule) {
  if (!(schedule.start >= schedule.end) || !(schedule.end >= 0.0)) {
    throw ParameterError("lambda schedule must satisfy start >= end >= 0, got start " +
                         std::to_string(schedule.start) + ", end " +
                         std::to_string(schedule.end));
  }
  if (schedule.ramp_epochs < 1) {
    throw ParameterError("lambda schedule needs at least one ramp epoch");
  }
  if (epoch == 0 && schedule.uniform_first_epoch) return {true, schedule.start};
  if (epoch >= schedule.ramp_epochs) return {false, schedule.end};
  if (epoch < 1 || schedule.ramp_epochs == 1) return {false, schedule.start};
  const double t =
      static_cast<double>(epoch - 1) / static_cast<double>(schedule.ramp_epochs - 1);
  return {false, schedule.start + (schedule.end - schedule.start) * t};
}

NodePtr attentive_ot_loss(const NodePtr& audio, const NodePtr& image,
                          const AttentionNodes& params, double lambda) {
  if (!(lambda >= 0.0)) {
    throw ParameterError("entropy weight lambda must be nonnegative, got " +
                         std::to_string(lambda));
  }
  auto w = attention_weight_nodes(audio, image, params);
  auto cost = emd_cost_node(audio, image, w.alpha, w.beta);
  auto entropies = add(entropy_node(w.alpha), entropy_node(w.beta));
  return add(cost, scale(entropies, -lambda));
}

double attentive_ot_loss_value(const Matrix& audio, const Matrix& image,
                               const CrossAttentionParams& params, double lambda) {
  auto nodes = make_attention_nodes(params, /*requires_grad=*/false);
  auto loss = attentive_ot_loss(constant(audio), constant(image), nodes, lambda);
  return loss->value(0, 0);
}

}  // namespace dali
