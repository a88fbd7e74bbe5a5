#pragma once

#include <cstdint>
#include <string>

#include "dali/attentive_ot.hpp"
#include "dali/data.hpp"
#include "dali/encoder.hpp"
#include "dali/gap.hpp"
#include "dali/ot.hpp"
#include "dali/training.hpp"

namespace dali {

// Binary formats share one convention: magic "DALI", a u32 format version,
// and a named-tensor table (u32 name length, UTF-8 name, u32 rows, u32 cols,
// row-major little-endian f64 payload). A file that cannot be opened raises
// an io error; one that opens but does not parse raises a schema error.

struct Checkpoint {
  EncoderParams encoder;
  bool has_attention = false;
  CrossAttentionParams attention;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

void save_dataset(const std::string& path, const PairedDataset& ds);
PairedDataset load_dataset(const std::string& path);

// Embedding tables: binary record stream (magic "DALI"; per item: u32 id
// length, id, u32 frame count, u32 d, frame payloads, companion payload) or
// CSV rows "id,frame_index,v0..v{d-1}" with companion rows at frame_index -1.
void save_table(const std::string& path, const EmbeddingTable& table);
EmbeddingTable load_table(const std::string& path);
EmbeddingTable load_table_csv(const std::string& path);
// Sniffs the magic bytes and dispatches to the binary or CSV reader.
EmbeddingTable load_table_auto(const std::string& path);

// Point cloud JSON: {"points": [[...], ...], "weights": [...]?}. Missing
// weights mean a uniform distribution.
WeightedPointCloud load_cloud_json(const std::string& path);

struct OutputPaths {
  std::string dataset = "dataset.bin";
  std::string checkpoint = "checkpoint.bin";
  std::string history = "history.json";
  std::string report = "report.json";
  std::string pca = "pca.csv";
};

// One experiment per document: dataset recipe, training recipe, output file
// names, and the run seed. Parsing is strict — unknown keys anywhere in the
// document are schema errors, so a typo cannot silently fall back to a
// default.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  SynthConfig dataset;
  TrainConfig train;  // train.seed is taken from `seed` above
  OutputPaths outputs;
};

ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::string& text);

// Versioned result documents. Wall-clock timings are deliberately absent so
// identical runs serialize byte-identically.
std::string history_json(Method method, const TrainHistory& history);
std::string report_json(const GapReport& pooled, const GapReport& raw_tokens,
                        std::size_t neighbors);
// Plot data for the pooled-embedding projection: population,label,pc1,pc2.
std::string pca_csv(const GapReport& pooled);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// Shortest round-trip decimal form, always visibly floating-point
// ("0.0", not "0"), so repeated runs serialize scalars byte-identically.
std::string format_double(double v);

}  // namespace dali
