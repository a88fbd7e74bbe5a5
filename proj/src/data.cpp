#include "dali/data.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dali/errors.hpp"
#include "dali/rng.hpp"

namespace dali {

namespace {

// Frozen-encoder init scales; chosen so reference tokens get an O(1) spread
// that a same-shaped trainable encoder can reach.
constexpr double kFrozenScale1 = 1.0;
constexpr double kFrozenScale2 = 0.8;
// Pre-activation shift applied to mismatched reference tokens so they occupy
// a consistently distinct region of the embedding space.
constexpr double kMismatchOffset = 0.9;
// Slot maps blend a cross-modal base map with per-slot deltas. Fully
// independent per-slot maps would leave matched cross-modal pairs with no
// recoverable alignment; the shared base is what makes a matched reference
// token systematically closer than a mismatched one.
constexpr double kSlotDeltaScale = 0.5;

void validate_config(const SynthConfig& cfg) {
  if (cfg.n_samples == 0 || cfg.n_a == 0 || cfg.n_i == 0 || cfg.d_latent == 0 ||
      cfg.d_in == 0 || cfg.d == 0 || cfg.frozen_hidden == 0) {
    throw ParameterError("synthetic dataset dimensions must all be positive");
  }
  if (!(cfg.mismatch_rho >= 0.0 && cfg.mismatch_rho <= 1.0)) {
    throw ParameterError("mismatch fraction must lie in [0, 1], got " +
                         std::to_string(cfg.mismatch_rho));
  }
  if (!(cfg.noise_sigma >= 0.0)) {
    throw ParameterError("noise level must be nonnegative, got " +
                         std::to_string(cfg.noise_sigma));
  }
}

// Per-slot latent-to-feature map; entries scaled so map(z) is O(1) pre-tanh.
Matrix slot_map(std::size_t d_in, std::size_t d_latent, Rng& rng) {
  Matrix m(d_in, d_latent);
  const double s = 1.0 / std::sqrt(static_cast<double>(d_latent));
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = s * rng.normal();
  return m;
}

std::vector<double> map_tanh(const Matrix& m, const std::vector<double>& z,
                             const double* offset) {
  std::vector<double> out(m.rows(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) s += m(i, j) * z[j];
    if (offset != nullptr) s += offset[i];
    out[i] = std::tanh(s);
  }
  return out;
}

}  // namespace

PairedDataset synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
  validate_config(cfg);
  Rng root(seed);

  PairedDataset ds;
  ds.config = cfg;
  ds.seed = seed;

  Rng frozen_rng = root.child(0);
  ds.frozen =
      init_encoder(cfg.d_in, cfg.frozen_hidden, cfg.d, frozen_rng, kFrozenScale1, kFrozenScale2);

  Rng map_rng = root.child(1);
  const Matrix base_map = slot_map(cfg.d_in, cfg.d_latent, map_rng);
  auto perturbed_map = [&]() {
    Matrix m = slot_map(cfg.d_in, cfg.d_latent, map_rng);
    for (std::size_t i = 0; i < m.size(); ++i) {
      m.data()[i] = base_map.data()[i] + kSlotDeltaScale * m.data()[i];
    }
    return m;
  };
  std::vector<Matrix> maps_a, maps_b;
  maps_a.reserve(cfg.n_a);
  maps_b.reserve(cfg.n_i);
  for (std::size_t j = 0; j < cfg.n_a; ++j) maps_a.push_back(perturbed_map());
  for (std::size_t j = 0; j < cfg.n_i; ++j) maps_b.push_back(perturbed_map());
  std::vector<double> offset(cfg.d_in);
  for (double& o : offset) o = map_rng.uniform() < 0.5 ? -kMismatchOffset : kMismatchOffset;

  ds.samples.reserve(cfg.n_samples);
  std::vector<double> z(cfg.d_latent), base(cfg.d_latent);
  for (std::size_t s = 0; s < cfg.n_samples; ++s) {
    Rng rng = root.child(2 + s);
    Sample sample;
    sample.latent_id = s;
    for (double& v : z) v = rng.normal();

    sample.raw_a = Matrix(cfg.n_a, cfg.d_in);
    for (std::size_t j = 0; j < cfg.n_a; ++j) {
      for (std::size_t t = 0; t < cfg.d_latent; ++t) base[t] = z[t] + cfg.noise_sigma * rng.normal();
      const auto row = map_tanh(maps_a[j], base, nullptr);
      for (std::size_t t = 0; t < cfg.d_in; ++t) sample.raw_a(j, t) = row[t];
    }

    Matrix raw_b(cfg.n_i, cfg.d_in);
    sample.mismatch_mask.assign(cfg.n_i, 0);
    for (std::size_t j = 0; j < cfg.n_i; ++j) {
      const bool mismatched = rng.uniform() < cfg.mismatch_rho;
      sample.mismatch_mask[j] = mismatched ? 1 : 0;
      if (mismatched) {
        for (double& v : base) v = rng.normal();  // independent latent
      } else {
        base = z;
      }
      for (double& v : base) v += cfg.noise_sigma * rng.normal();
      const auto row = map_tanh(maps_b[j], base, mismatched ? offset.data() : nullptr);
      for (std::size_t t = 0; t < cfg.d_in; ++t) raw_b(j, t) = row[t];
    }
    sample.tokens_b = encode(ds.frozen, raw_b);
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

void validate_table(const EmbeddingTable& table) {
  std::size_t d = 0;
  for (const auto& item : table.items) {
    if (item.frames.empty()) {
      throw DimensionError("embedding item '" + item.id + "' has no frames");
    }
    if (d == 0) d = item.companion.size();
    if (d == 0) throw DimensionError("embedding item '" + item.id + "' has an empty companion");
    if (item.companion.size() != d) {
      throw DimensionError("embedding item '" + item.id + "' companion dimension " +
                           std::to_string(item.companion.size()) + " differs from table dimension " +
                           std::to_string(d));
    }
    for (const auto& frame : item.frames) {
      if (frame.size() != d) {
        throw DimensionError("embedding item '" + item.id + "' frame dimension " +
                             std::to_string(frame.size()) + " differs from table dimension " +
                             std::to_string(d));
      }
    }
  }
}

namespace {

double squared_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

// Mean frame-to-companion distance; degenerate on any zero-norm cosine input.
RankedPair item_distance(const EmbeddingItem& item, FilterMetric metric) {
  RankedPair r;
  r.id = item.id;
  const double comp_norm = std::sqrt(squared_norm(item.companion));
  double sum = 0.0;
  for (const auto& frame : item.frames) {
    if (metric == FilterMetric::cosine) {
      const double frame_norm = std::sqrt(squared_norm(frame));
      if (!(frame_norm > 0.0) || !(comp_norm > 0.0)) {
        r.degenerate = true;
        r.distance = 0.0;
        return r;
      }
      double dot = 0.0;
      for (std::size_t j = 0; j < frame.size(); ++j) dot += frame[j] * item.companion[j];
      sum += 1.0 - dot / (frame_norm * comp_norm);
    } else {
      double sq = 0.0;
      for (std::size_t j = 0; j < frame.size(); ++j) {
        const double diff = frame[j] - item.companion[j];
        sq += diff * diff;
      }
      sum += std::sqrt(sq);
    }
  }
  r.distance = sum / static_cast<double>(item.frames.size());
  return r;
}

}  // namespace

std::vector<RankedPair> rank_pairs(const EmbeddingTable& table, FilterMetric metric) {
  validate_table(table);
  std::vector<RankedPair> ranked;
  ranked.reserve(table.items.size());
  for (const auto& item : table.items) ranked.push_back(item_distance(item, metric));
  std::stable_sort(ranked.begin(), ranked.end(), [](const RankedPair& a, const RankedPair& b) {
    if (a.degenerate != b.degenerate) return !a.degenerate;
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.id < b.id;
  });
  return ranked;
}

std::vector<std::string> filter_pairs(const EmbeddingTable& table, std::size_t keep_n,
                                      FilterMetric metric) {
  if (keep_n > table.items.size()) {
    throw ParameterError("cannot keep " + std::to_string(keep_n) + " of " +
                         std::to_string(table.items.size()) + " items");
  }
  auto ranked = rank_pairs(table, metric);
  std::vector<std::string> kept;
  kept.reserve(keep_n);
  for (std::size_t i = 0; i < keep_n; ++i) kept.push_back(ranked[i].id);
  return kept;
}

}  // namespace dali
