#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dali/encoder.hpp"
#include "dali/matrix.hpp"

namespace dali {

// Synthetic paired-modality generator: each sample shares one latent between
// the trainable-side raw inputs and the frozen-side reference tokens, except
// for a mismatch_rho fraction of reference tokens drawn from independent
// latents and pushed into a systematically offset region.
struct SynthConfig {
  std::size_t n_samples = 64;
  std::size_t n_a = 6;   // trainable-side tokens per sample
  std::size_t n_i = 8;   // reference-side tokens per sample
  std::size_t d_latent = 4;
  std::size_t d_in = 12;  // trainable-side raw feature count
  std::size_t d = 8;      // shared embedding dimension
  std::size_t frozen_hidden = 16;
  double mismatch_rho = 0.0;
  double noise_sigma = 0.05;
};

struct Sample {
  Matrix raw_a;                             // n_a x d_in
  Matrix tokens_b;                          // n_i x d, frozen-encoder outputs
  std::vector<std::uint8_t> mismatch_mask;  // n_i, 1 = independent latent
  std::uint64_t latent_id = 0;
};

struct PairedDataset {
  SynthConfig config;
  std::uint64_t seed = 0;
  EncoderParams frozen;  // reference-side MLP, fixed at generation time
  std::vector<Sample> samples;
};

PairedDataset synth_generate(const SynthConfig& cfg, std::uint64_t seed);

// Generic embedding table for discrepancy filtering: several frame vectors
// per item plus one companion vector to compare against.
struct EmbeddingItem {
  std::string id;
  std::vector<std::vector<double>> frames;
  std::vector<double> companion;
};

struct EmbeddingTable {
  std::vector<EmbeddingItem> items;
};

void validate_table(const EmbeddingTable& table);

enum class FilterMetric { cosine, l2 };

struct RankedPair {
  std::string id;
  double distance = 0.0;
  bool degenerate = false;  // zero-norm vector hit; ranked after all clean items
};

// Per item: mean over frames of the distance to the companion, then a total
// order (clean before degenerate, distance ascending, id ascending).
std::vector<RankedPair> rank_pairs(const EmbeddingTable& table,
                                   FilterMetric metric = FilterMetric::cosine);

// First keep_n ids of the ranking.
std::vector<std::string> filter_pairs(const EmbeddingTable& table, std::size_t keep_n,
                                      FilterMetric metric = FilterMetric::cosine);

}  // namespace dali
