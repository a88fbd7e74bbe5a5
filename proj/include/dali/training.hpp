#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dali/attentive_ot.hpp"
#include "dali/autodiff.hpp"
#include "dali/contrastive.hpp"
#include "dali/data.hpp"
#include "dali/encoder.hpp"

namespace dali {

enum class Method { MMD, OT, OT_ATT, CONTRASTIVE };

std::string method_name(Method method);
Method method_from_name(const std::string& name);  // parameter error on unknown names

struct TrainConfig {
  Method method = Method::MMD;
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double learning_rate = 2e-4;  // cosine-decayed over the full run
  std::uint64_t seed = 0;
  std::size_t hidden_dim = 16;         // trainable encoder hidden width
  std::size_t kernel_count = 5;        // MMD mixture size
  double attention_tau = 20.0;         // OT_ATT outer softmax temperature
  AttentiveLossConfig attentive;       // OT_ATT entropy weight schedule
  ContrastiveConfig contrastive;       // CONTRASTIVE baseline settings
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t gap_neighbors = 5;  // k for the per-epoch overlap diagnostic
  // Cosine-decay horizon in optimizer steps; 0 derives it from epochs. Set it
  // explicitly to keep the schedule fixed when continuing a longer plan with
  // fewer epochs (the decay is clamped once the horizon is passed).
  std::size_t schedule_steps = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  // Loss of the epoch's first batch before any update that epoch; lets the
  // no-hidden-state property be re-derived from a shorter run.
  double first_batch_loss = 0.0;
  double lambda = 0.0;            // entropy weight in effect (OT_ATT only)
  bool uniform_weights = false;   // OT_ATT warmup epoch
  double centroid_distance = 0.0;
  double normalized_centroid_distance = 0.0;
  double overlap_fraction = 0.0;
  double wall_seconds = 0.0;  // measured; never serialized
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

struct TrainResult {
  EncoderParams params;
  TrainHistory history;
  bool has_attention = false;
  CrossAttentionParams attention;  // trained heads, meaningful for OT_ATT
};

// Deterministic shuffled sample order for one epoch of a run.
std::vector<std::size_t> epoch_sample_order(std::size_t n_samples, std::size_t epoch,
                                            std::uint64_t seed);

// Scalar loss graph over the given batch of sample indices. `attention` is
// required for OT_ATT and ignored otherwise. Exposed so recorded history
// values can be re-derived independently of the training loop.
NodePtr batch_loss(const PairedDataset& ds, const std::vector<std::size_t>& batch,
                   const EncoderNodes& enc, const AttentionNodes* attention,
                   const TrainConfig& cfg, const LambdaPhase& phase);

// Minibatch alignment training of the token-wise encoder (and, for OT_ATT,
// the cross-attention heads) against the dataset's frozen reference tokens.
// Fully deterministic given (dataset, config).
TrainResult train_alignment(const PairedDataset& ds, const TrainConfig& cfg);

}  // namespace dali
