#include "dali/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

#include "dali/errors.hpp"
#include "dali/gap.hpp"
#include "dali/mmd.hpp"
#include "dali/ot.hpp"

namespace dali {

std::string method_name(Method method) {
  switch (method) {
    case Method::MMD: return "MMD";
    case Method::OT: return "OT";
    case Method::OT_ATT: return "OT_ATT";
    case Method::CONTRASTIVE: return "CONTRASTIVE";
  }
  throw ParameterError("unknown training method value");
}

Method method_from_name(const std::string& name) {
  if (name == "MMD") return Method::MMD;
  if (name == "OT") return Method::OT;
  if (name == "OT_ATT") return Method::OT_ATT;
  if (name == "CONTRASTIVE") return Method::CONTRASTIVE;
  throw ParameterError("unknown training method '" + name +
                       "' (expected MMD, OT, OT_ATT or CONTRASTIVE)");
}

namespace {

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.batch_size == 0) throw ParameterError("batch size must be positive");
  if (!(cfg.learning_rate > 0.0)) {
    throw ParameterError("learning rate must be positive, got " +
                         std::to_string(cfg.learning_rate));
  }
  if (cfg.hidden_dim == 0) throw ParameterError("hidden width must be positive");
  if (cfg.method == Method::MMD && cfg.kernel_count == 0) {
    throw ParameterError("MMD needs at least one kernel");
  }
  if (!(cfg.adam_beta1 >= 0.0 && cfg.adam_beta1 < 1.0) ||
      !(cfg.adam_beta2 >= 0.0 && cfg.adam_beta2 < 1.0) || !(cfg.adam_eps > 0.0)) {
    throw ParameterError("optimizer moments must lie in [0,1) with positive epsilon");
  }
  if (cfg.gap_neighbors == 0) throw ParameterError("gap neighbor count must be positive");
}

Matrix uniform_row(std::size_t n) {
  Matrix row(1, n);
  for (std::size_t i = 0; i < n; ++i) row(0, i) = 1.0 / static_cast<double>(n);
  return row;
}

// First- and second-moment buffers for one trainable tensor.
struct AdamSlot {
  Matrix m, v;
};

void adam_update(Matrix& param, const Matrix& grad, AdamSlot& slot, std::size_t t, double lr,
                 const TrainConfig& cfg) {
  if (slot.m.empty()) {
    slot.m = Matrix(param.rows(), param.cols());
    slot.v = Matrix(param.rows(), param.cols());
  }
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad.data()[i];
    double& m = slot.m.data()[i];
    double& v = slot.v.data()[i];
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * g;
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * g * g;
    param.data()[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.adam_eps);
  }
}

Matrix leaf_grad(const NodePtr& node) { return node->grad; }

// Per-sample pooled rows for both modalities under the current params.
void pooled_embeddings(const PairedDataset& ds, const EncoderParams& params, Matrix& pooled_a,
                       Matrix& pooled_b) {
  std::vector<Matrix> enc_a, ref_b;
  enc_a.reserve(ds.samples.size());
  ref_b.reserve(ds.samples.size());
  for (const auto& s : ds.samples) {
    enc_a.push_back(encode(params, s.raw_a));
    ref_b.push_back(s.tokens_b);
  }
  pooled_a = pool_samples(enc_a);
  pooled_b = pool_samples(ref_b);
}

}  // namespace

std::vector<std::size_t> epoch_sample_order(std::size_t n_samples, std::size_t epoch,
                                            std::uint64_t seed) {
  std::vector<std::size_t> order(n_samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng(seed).child(2).child(epoch);
  for (std::size_t i = n_samples; i > 1; --i) {
    const std::uint64_t j = rng.below(i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

NodePtr batch_loss(const PairedDataset& ds, const std::vector<std::size_t>& batch,
                   const EncoderNodes& enc, const AttentionNodes* attention,
                   const TrainConfig& cfg, const LambdaPhase& phase) {
  if (batch.empty()) throw ContractError("batch must contain at least one sample");

  if (cfg.method == Method::CONTRASTIVE) {
    std::vector<NodePtr> rows_a, rows_b;
    rows_a.reserve(batch.size());
    rows_b.reserve(batch.size());
    for (std::size_t idx : batch) {
      const Sample& s = ds.samples.at(idx);
      rows_a.push_back(mean_axis(encode_node(enc, constant(s.raw_a)), Axis::rows));
      rows_b.push_back(mean_axis(constant(s.tokens_b), Axis::rows));
    }
    return infonce_loss(concat_rows(rows_a), concat_rows(rows_b), cfg.contrastive);
  }

  NodePtr total;
  for (std::size_t idx : batch) {
    const Sample& s = ds.samples.at(idx);
    auto x = encode_node(enc, constant(s.raw_a));
    auto y = constant(s.tokens_b);
    NodePtr loss_s;
    switch (cfg.method) {
      case Method::MMD: {
        // Bandwidths follow the current embeddings but are not differentiated.
        auto spec = bandwidths_from_data(x->value, y->value, cfg.kernel_count);
        loss_s = mmd_loss(x, y, spec);
        break;
      }
      case Method::OT: {
        auto alpha = constant(uniform_row(x->value.rows()));
        auto beta = constant(uniform_row(y->value.rows()));
        loss_s = emd_cost_node(x, y, alpha, beta);
        break;
      }
      case Method::OT_ATT: {
        if (attention == nullptr) {
          throw ContractError("OT_ATT batch loss needs attention parameters");
        }
        if (phase.uniform_weights) {
          // Warmup epoch: uniform transport weights, no entropy term (it is
          // constant there) and no attention gradients.
          auto alpha = constant(uniform_row(x->value.rows()));
          auto beta = constant(uniform_row(y->value.rows()));
          loss_s = emd_cost_node(x, y, alpha, beta);
        } else {
          loss_s = attentive_ot_loss(x, y, *attention, phase.lambda);
        }
        break;
      }
      case Method::CONTRASTIVE:
        break;  // handled above
    }
    total = total == nullptr ? loss_s : add(total, loss_s);
  }
  return scale(total, 1.0 / static_cast<double>(batch.size()));
}

TrainResult train_alignment(const PairedDataset& ds, const TrainConfig& cfg) {
  if (ds.samples.empty()) throw ContractError("cannot train on an empty dataset");
  validate_train_config(cfg);

  const std::size_t d_in = ds.config.d_in;
  const std::size_t d = ds.config.d;

  Rng root(cfg.seed);
  Rng enc_rng = root.child(0);
  TrainResult result;
  result.params = init_encoder(d_in, cfg.hidden_dim, d, enc_rng,
                               1.0 / std::sqrt(static_cast<double>(d_in)),
                               1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim)));
  result.has_attention = cfg.method == Method::OT_ATT;
  if (result.has_attention) {
    Rng att_rng = root.child(1);
    result.attention = init_attention(d, cfg.attention_tau, att_rng);
  }

  const std::size_t n = ds.samples.size();
  const std::size_t num_batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps =
      cfg.schedule_steps > 0 ? cfg.schedule_steps : cfg.epochs * num_batches;

  std::vector<AdamSlot> slots(result.has_attention ? 10 : 4);
  std::size_t adam_t = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t_start = std::chrono::steady_clock::now();
    const auto order = epoch_sample_order(n, epoch, cfg.seed);
    LambdaPhase phase{false, 0.0};
    if (cfg.method == Method::OT_ATT) {
      phase = lambda_at(epoch, cfg.attentive.lambda_schedule);
    }

    double loss_sum = 0.0;
    std::size_t evaluated = 0;
    double first_batch = 0.0;
    std::size_t step_in_epoch = 0;
    for (std::size_t b = 0; b < num_batches; ++b) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(n, lo + cfg.batch_size);
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                     order.begin() + static_cast<std::ptrdiff_t>(hi));
      if (cfg.method == Method::CONTRASTIVE && batch.size() < 2) {
        ++step_in_epoch;  // keep the lr schedule aligned with batch slots
        continue;
      }

      auto enc_nodes = make_encoder_nodes(result.params);
      AttentionNodes att_nodes;
      if (result.has_attention) att_nodes = make_attention_nodes(result.attention);

      NodePtr loss;
      try {
        loss = batch_loss(ds, batch, enc_nodes, result.has_attention ? &att_nodes : nullptr,
                          cfg, phase);
      } catch (const ContractError&) {
        // Finite-value guards tripping mid-graph means the parameters have
        // blown up; report it as a training failure with its location.
        throw TrainingError("loss diverged", epoch, b);
      } catch (const ParameterError&) {
        // Config errors were rejected before the loop started, so a
        // parameter failure here (e.g. nonfinite kernel bandwidths computed
        // from exploded embeddings) is also divergence.
        throw TrainingError("loss diverged", epoch, b);
      }
      const double value = loss->value(0, 0);
      if (!std::isfinite(value)) {
        throw TrainingError("loss diverged", epoch, b);
      }
      if (b == 0) first_batch = value;
      loss_sum += value;
      ++evaluated;

      backward(loss);

      std::vector<Matrix*> params = {&result.params.w1, &result.params.b1, &result.params.w2,
                                     &result.params.b2};
      std::vector<Matrix> grads = {leaf_grad(enc_nodes.w1), leaf_grad(enc_nodes.b1),
                                   leaf_grad(enc_nodes.w2), leaf_grad(enc_nodes.b2)};
      if (result.has_attention) {
        for (Matrix* p : {&result.attention.wq_a, &result.attention.wk_a,
                          &result.attention.wv_a, &result.attention.wq_i,
                          &result.attention.wk_i, &result.attention.wv_i}) {
          params.push_back(p);
        }
        for (const NodePtr& g : {att_nodes.wq_a, att_nodes.wk_a, att_nodes.wv_a,
                                 att_nodes.wq_i, att_nodes.wk_i, att_nodes.wv_i}) {
          grads.push_back(leaf_grad(g));
        }
      }
      for (const Matrix& g : grads) {
        if (!g.empty()) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite(g.data()[i])) {
              throw TrainingError("gradient diverged", epoch, b);
            }
          }
        }
      }

      const std::size_t global_step = epoch * num_batches + step_in_epoch;
      const double progress = std::min(
          1.0, static_cast<double>(global_step) / static_cast<double>(total_steps));
      const double lr = cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
      ++adam_t;
      for (std::size_t p = 0; p < params.size(); ++p) {
        adam_update(*params[p], grads[p], slots[p], adam_t, lr, cfg);
      }
      ++step_in_epoch;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = evaluated > 0 ? loss_sum / static_cast<double>(evaluated) : 0.0;
    rec.first_batch_loss = first_batch;
    rec.lambda = cfg.method == Method::OT_ATT && !phase.uniform_weights ? phase.lambda : 0.0;
    rec.uniform_weights = phase.uniform_weights;
    if (n >= 2) {
      Matrix pooled_a, pooled_b;
      pooled_embeddings(ds, result.params, pooled_a, pooled_b);
      const std::size_t k = std::min(cfg.gap_neighbors, 2 * n - 1);
      GapReport gap = gap_report(pooled_a, pooled_b, k);
      rec.centroid_distance = gap.centroid_distance;
      rec.normalized_centroid_distance = gap.normalized_centroid_distance;
      rec.overlap_fraction = gap.overlap_fraction;
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    result.history.epochs.push_back(rec);
  }
  return result;
}

}  // namespace dali
