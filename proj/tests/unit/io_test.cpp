#include "dali/io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <doctest.h>

#include "dali/data.hpp"
#include "dali/errors.hpp"
#include "dali/gap.hpp"
#include "dali/rng.hpp"
#include "dali/training.hpp"

namespace {

// Unique scratch path per call; removed when the fixture dies.
class TempFile {
 public:
  explicit TempFile(const std::string& stem) {
    static int counter = 0;
    path_ = (std::filesystem::temp_directory_path() /
             ("dali_io_test_" + stem + "_" + std::to_string(counter++)))
                .string();
  }
  ~TempFile() { std::remove(path_.c_str()); }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

dali::Checkpoint sample_checkpoint(bool with_attention) {
  dali::Rng rng(3);
  dali::Checkpoint ckpt;
  ckpt.encoder = dali::init_encoder(5, 7, 4, rng, 0.5, 0.5);
  for (std::size_t i = 0; i < ckpt.encoder.b1.size(); ++i) {
    ckpt.encoder.b1.data()[i] = rng.normal();
  }
  if (with_attention) {
    ckpt.has_attention = true;
    ckpt.attention = dali::init_attention(4, 17.5, rng);
  }
  return ckpt;
}

}  // namespace

TEST_CASE("checkpoints round-trip bit-exactly") {
  for (bool with_attention : {false, true}) {
    CAPTURE(with_attention);
    auto ckpt = sample_checkpoint(with_attention);
    TempFile file("ckpt");
    dali::save_checkpoint(file.path(), ckpt);
    auto back = dali::load_checkpoint(file.path());
    CHECK(back.encoder.w1 == ckpt.encoder.w1);
    CHECK(back.encoder.b1 == ckpt.encoder.b1);
    CHECK(back.encoder.w2 == ckpt.encoder.w2);
    CHECK(back.encoder.b2 == ckpt.encoder.b2);
    REQUIRE(back.has_attention == with_attention);
    if (with_attention) {
      CHECK(back.attention.wq_a == ckpt.attention.wq_a);
      CHECK(back.attention.wv_i == ckpt.attention.wv_i);
      CHECK(back.attention.tau == ckpt.attention.tau);
    }
  }
}

TEST_CASE("checkpoint writes are byte-identical across runs") {
  auto ckpt = sample_checkpoint(true);
  TempFile first("ckpt_a"), second("ckpt_b");
  dali::save_checkpoint(first.path(), ckpt);
  dali::save_checkpoint(second.path(), ckpt);
  CHECK(dali::read_text_file(first.path()) == dali::read_text_file(second.path()));
}

TEST_CASE("checkpoint loader rejects damaged files") {
  TempFile file("ckpt_bad");
  CHECK_THROWS_AS(dali::load_checkpoint(file.path() + ".missing"), dali::IoError);

  dali::write_text_file(file.path(), "NOPE");
  CHECK_THROWS_AS(dali::load_checkpoint(file.path()), dali::SchemaError);

  auto ckpt = sample_checkpoint(false);
  dali::save_checkpoint(file.path(), ckpt);
  auto bytes = dali::read_text_file(file.path());
  dali::write_text_file(file.path(), bytes.substr(0, bytes.size() - 3));  // truncate
  CHECK_THROWS_AS(dali::load_checkpoint(file.path()), dali::SchemaError);

  dali::write_text_file(file.path(), bytes + "xx");  // trailing garbage
  CHECK_THROWS_AS(dali::load_checkpoint(file.path()), dali::SchemaError);

  // Version bump in bytes 4..7.
  auto versioned = bytes;
  versioned[4] = 9;
  dali::write_text_file(file.path(), versioned);
  CHECK_THROWS_AS(dali::load_checkpoint(file.path()), dali::SchemaError);
}

TEST_CASE("datasets round-trip including masks and the frozen encoder") {
  dali::SynthConfig cfg;
  cfg.n_samples = 7;
  cfg.n_a = 3;
  cfg.n_i = 4;
  cfg.d_latent = 2;
  cfg.d_in = 5;
  cfg.d = 4;
  cfg.frozen_hidden = 6;
  cfg.mismatch_rho = 0.5;
  auto ds = dali::synth_generate(cfg, 0xdeadbeefcafe1234ull);

  TempFile file("dataset");
  dali::save_dataset(file.path(), ds);
  auto back = dali::load_dataset(file.path());
  CHECK(back.seed == ds.seed);
  CHECK(back.config.n_samples == cfg.n_samples);
  CHECK(back.config.mismatch_rho == cfg.mismatch_rho);
  CHECK(back.frozen.w1 == ds.frozen.w1);
  CHECK(back.frozen.b2 == ds.frozen.b2);
  REQUIRE(back.samples.size() == ds.samples.size());
  for (std::size_t s = 0; s < ds.samples.size(); ++s) {
    CHECK(back.samples[s].raw_a == ds.samples[s].raw_a);
    CHECK(back.samples[s].tokens_b == ds.samples[s].tokens_b);
    CHECK(back.samples[s].mismatch_mask == ds.samples[s].mismatch_mask);
  }
}

TEST_CASE("embedding tables round-trip through the binary format") {
  dali::EmbeddingTable table;
  dali::EmbeddingItem a;
  a.id = "first";
  a.frames = {{1.0, 2.0}, {3.0, -4.0}};
  a.companion = {0.5, 0.5};
  dali::EmbeddingItem b;
  b.id = "second item with spaces";
  b.frames = {{-1.0, 0.25}};
  b.companion = {1.0, 0.0};
  table.items = {a, b};

  TempFile file("table");
  dali::save_table(file.path(), table);
  auto back = dali::load_table(file.path());
  REQUIRE(back.items.size() == 2);
  CHECK(back.items[0].id == "first");
  CHECK(back.items[0].frames == a.frames);
  CHECK(back.items[0].companion == a.companion);
  CHECK(back.items[1].id == b.id);
  CHECK(back.items[1].frames == b.frames);

  auto sniffed = dali::load_table_auto(file.path());
  CHECK(sniffed.items.size() == 2);
}

TEST_CASE("embedding tables import from csv") {
  TempFile file("table_csv");
  dali::write_text_file(file.path(),
                        "id,frame_index,v0,v1\n"
                        "clock,1,0.0,1.0\n"
                        "clock,0,1.0,0.0\n"
                        "clock,-1,1.0,0.0\n"
                        "wind,0,0.0,-3.0\n"
                        "wind,-1,0.0,1.0\n");
  auto table = dali::load_table_csv(file.path());
  REQUIRE(table.items.size() == 2);
  CHECK(table.items[0].id == "clock");
  // Frames are ordered by frame_index, not file order.
  CHECK(table.items[0].frames[0] == std::vector<double>{1.0, 0.0});
  CHECK(table.items[0].frames[1] == std::vector<double>{0.0, 1.0});
  CHECK(table.items[0].companion == std::vector<double>{1.0, 0.0});
  CHECK(table.items[1].id == "wind");

  auto sniffed = dali::load_table_auto(file.path());
  CHECK(sniffed.items.size() == 2);
}

TEST_CASE("csv import rejects malformed rows") {
  TempFile file("table_csv_bad");
  dali::write_text_file(file.path(), "clock,0,1.0,0.0\nclock,zero,0.0,1.0\n");
  CHECK_THROWS_AS(dali::load_table_csv(file.path()), dali::SchemaError);

  dali::write_text_file(file.path(), "clock,0,1.0,0.0\nclock,1,0.5\n");
  CHECK_THROWS_AS(dali::load_table_csv(file.path()), dali::SchemaError);

  dali::write_text_file(file.path(), "clock,0,1.0,0.0\n");  // no companion
  CHECK_THROWS_AS(dali::load_table_csv(file.path()), dali::SchemaError);

  dali::write_text_file(file.path(), "clock,-1,1.0,0.0\n");  // no frames
  CHECK_THROWS_AS(dali::load_table_csv(file.path()), dali::SchemaError);
}

TEST_CASE("point clouds load from json") {
  TempFile file("cloud");
  dali::write_text_file(file.path(),
                        "{\"points\": [[0.0, 0.0], [1.0, 0.0]], \"weights\": [0.25, 0.75]}");
  auto cloud = dali::load_cloud_json(file.path());
  CHECK(cloud.points.rows() == 2);
  CHECK(cloud.weights == std::vector<double>{0.25, 0.75});

  dali::write_text_file(file.path(), "{\"points\": [[0.0], [2.0], [5.0]]}");
  auto uniform = dali::load_cloud_json(file.path());
  CHECK(uniform.weights == std::vector<double>(3, 1.0 / 3.0));

  dali::write_text_file(file.path(), "{\"points\": [[0.0, 1.0], [2.0]]}");
  CHECK_THROWS_AS(dali::load_cloud_json(file.path()), dali::SchemaError);

  dali::write_text_file(file.path(), "{\"points\": [[0.0]], \"extra\": 1}");
  CHECK_THROWS_AS(dali::load_cloud_json(file.path()), dali::SchemaError);

  dali::write_text_file(file.path(), "{\"points\": [[0.0], [1.0]], \"weights\": [0.4, 0.7]}");
  CHECK_THROWS_AS(dali::load_cloud_json(file.path()), dali::SchemaError);

  dali::write_text_file(file.path(), "not json at all");
  CHECK_THROWS_AS(dali::load_cloud_json(file.path()), dali::SchemaError);
}

TEST_CASE("experiment configs parse strictly") {
  auto cfg = dali::parse_experiment_config(R"({
    "version": 1,
    "seed": 42,
    "dataset": {"n_samples": 16, "mismatch_rho": 0.3},
    "train": {"method": "OT_ATT", "epochs": 5, "learning_rate": 0.01, "lambda_end": 50.0},
    "outputs": {"history": "h.json"}
  })");
  CHECK(cfg.seed == 42);
  CHECK(cfg.train.seed == 42);
  CHECK(cfg.dataset.n_samples == 16);
  CHECK(cfg.dataset.mismatch_rho == 0.3);
  CHECK(cfg.dataset.n_a == 6);  // untouched default
  CHECK(cfg.train.method == dali::Method::OT_ATT);
  CHECK(cfg.train.epochs == 5);
  CHECK(cfg.train.learning_rate == 0.01);
  CHECK(cfg.train.attentive.lambda_schedule.end == 50.0);
  CHECK(cfg.train.attentive.lambda_schedule.start == 500.0);
  CHECK(cfg.outputs.history == "h.json");
  CHECK(cfg.outputs.report == "report.json");

  CHECK_THROWS_AS(dali::parse_experiment_config("{\"sede\": 1}"), dali::SchemaError);
  CHECK_THROWS_AS(dali::parse_experiment_config("{\"train\": {\"epoch\": 3}}"),
                  dali::SchemaError);
  CHECK_THROWS_AS(dali::parse_experiment_config("{\"train\": {\"method\": \"JPEG\"}}"),
                  dali::SchemaError);
  CHECK_THROWS_AS(dali::parse_experiment_config("{\"seed\": -4}"), dali::SchemaError);
  CHECK_THROWS_AS(dali::parse_experiment_config("{\"version\": 2}"), dali::SchemaError);
  CHECK_THROWS_AS(dali::parse_experiment_config("[1,2]"), dali::SchemaError);
  CHECK_THROWS_AS(dali::parse_experiment_config("{\"train\": {\"epochs\": \"ten\"}}"),
                  dali::SchemaError);
}

TEST_CASE("emitted documents are versioned and deterministic") {
  dali::TrainHistory history;
  dali::EpochRecord rec;
  rec.epoch = 0;
  rec.mean_loss = 1.25;
  rec.first_batch_loss = 1.5;
  rec.lambda = 500.0;
  rec.uniform_weights = false;
  rec.centroid_distance = 2.0;
  rec.normalized_centroid_distance = 0.75;
  rec.overlap_fraction = 0.5;
  rec.wall_seconds = 123.0;  // must never appear in the document
  history.epochs.push_back(rec);

  auto doc = dali::history_json(dali::Method::OT_ATT, history);
  CHECK(doc.find("\"version\": 1") != std::string::npos);
  CHECK(doc.find("\"method\": \"OT_ATT\"") != std::string::npos);
  CHECK(doc.find("\"mean_loss\": 1.25") != std::string::npos);
  CHECK(doc.find("wall") == std::string::npos);
  CHECK(doc.find("123") == std::string::npos);
  CHECK(doc == dali::history_json(dali::Method::OT_ATT, history));

  auto empty = dali::history_json(dali::Method::MMD, dali::TrainHistory{});
  CHECK(empty.find("\"epochs\": []") != std::string::npos);
}

TEST_CASE("gap reports serialize to json and csv") {
  dali::Rng rng(9);
  dali::Matrix a(6, 3), b(5, 3);
  for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] = rng.normal() + 2.0;
  auto pooled = dali::gap_report(a, b, 3);

  auto doc = dali::report_json(pooled, pooled, 3);
  CHECK(doc.find("\"version\": 1") != std::string::npos);
  CHECK(doc.find("\"pooled\"") != std::string::npos);
  CHECK(doc.find("\"raw_tokens\"") != std::string::npos);
  CHECK(doc.find("\"neighbors\": 3") != std::string::npos);

  auto csv = dali::pca_csv(pooled);
  CHECK(csv.rfind("population,label,pc1,pc2\n", 0) == 0);
  // Header plus one row per point in either population.
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 6 + 5);
  CHECK(csv.find("trainable,0,") != std::string::npos);
  CHECK(csv.find("reference,4,") != std::string::npos);
}
