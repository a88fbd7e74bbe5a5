#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dali/data.hpp"
#include "dali/encoder.hpp"
#include "dali/errors.hpp"
#include "dali/gap.hpp"
#include "dali/io.hpp"
#include "dali/mmd.hpp"
#include "dali/ot.hpp"
#include "dali/training.hpp"

namespace {

// Exit codes double as the error taxonomy: scripts branch on them, humans
// read the single-line stderr message.
constexpr int kOk = 0;
constexpr int kInternal = 1;
constexpr int kUsage = 2;
constexpr int kIo = 3;
constexpr int kSchema = 4;
constexpr int kDimension = 5;
constexpr int kParameter = 6;
constexpr int kDegenerate = 7;
constexpr int kMarginal = 8;
constexpr int kSolver = 9;
constexpr int kContract = 10;
constexpr int kBatch = 11;
constexpr int kTraining = 12;

int fail(const char* category, int code, const std::string& message) {
  std::string line = message;
  for (char& c : line) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cerr << "error: " << category << ": " << line << "\n";
  return code;
}

std::string join_out(const std::string& out_dir, const std::string& name) {
  return (std::filesystem::path(out_dir) / name).string();
}

void ensure_out_dir(const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    throw dali::IoError("cannot create output directory '" + out_dir + "': " + ec.message());
  }
}

struct CommonFlags {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_given = false;
};

dali::ExperimentConfig load_config(const CommonFlags& flags) {
  auto cfg = dali::load_experiment_config(flags.config_path);
  if (flags.seed_given) {
    cfg.seed = flags.seed;
    cfg.train.seed = flags.seed;
  }
  return cfg;
}

void note_written(const std::string& path) { std::cout << "wrote: " << path << "\n"; }

int cmd_generate_data(const CommonFlags& flags) {
  const auto cfg = load_config(flags);
  const auto ds = dali::synth_generate(cfg.dataset, cfg.seed);
  ensure_out_dir(flags.out_dir);
  const std::string path = join_out(flags.out_dir, cfg.outputs.dataset);
  dali::save_dataset(path, ds);
  note_written(path);
  return kOk;
}

int cmd_train(const CommonFlags& flags) {
  const auto cfg = load_config(flags);
  // The dataset is regenerated from the config rather than read from disk, so
  // a train run is a pure function of its config document.
  const auto ds = dali::synth_generate(cfg.dataset, cfg.seed);
  const auto result = dali::train_alignment(ds, cfg.train);

  ensure_out_dir(flags.out_dir);
  dali::Checkpoint ckpt;
  ckpt.encoder = result.params;
  ckpt.has_attention = result.has_attention;
  ckpt.attention = result.attention;
  const std::string ckpt_path = join_out(flags.out_dir, cfg.outputs.checkpoint);
  dali::save_checkpoint(ckpt_path, ckpt);
  note_written(ckpt_path);

  const std::string history_path = join_out(flags.out_dir, cfg.outputs.history);
  dali::write_text_file(history_path, dali::history_json(cfg.train.method, result.history));
  note_written(history_path);
  return kOk;
}

int cmd_diagnose(const std::string& checkpoint_path, const std::string& dataset_path,
                 std::size_t neighbors, const std::string& out_dir) {
  const auto ckpt = dali::load_checkpoint(checkpoint_path);
  const auto ds = dali::load_dataset(dataset_path);
  if (ds.samples.empty()) {
    throw dali::ContractError("dataset '" + dataset_path + "' has no samples");
  }
  if (ckpt.encoder.w2.rows() != ds.config.d) {
    throw dali::DimensionError("checkpoint encodes into " +
                               std::to_string(ckpt.encoder.w2.rows()) +
                               " dimensions but the dataset's reference tokens have " +
                               std::to_string(ds.config.d));
  }

  std::vector<dali::Matrix> encoded, reference;
  encoded.reserve(ds.samples.size());
  reference.reserve(ds.samples.size());
  for (const auto& sample : ds.samples) {
    encoded.push_back(dali::encode(ckpt.encoder, sample.raw_a));
    reference.push_back(sample.tokens_b);
  }

  const dali::Matrix pooled_a = dali::pool_samples(encoded);
  const dali::Matrix pooled_b = dali::pool_samples(reference);
  const std::size_t n_pooled = pooled_a.rows() + pooled_b.rows();
  const std::size_t k_pooled = std::min(neighbors, n_pooled - 1);
  const auto pooled = dali::gap_report(pooled_a, pooled_b, k_pooled);

  // Raw-token view: every token of every sample as its own point.
  const std::size_t d = pooled_a.cols();
  dali::Matrix raw_a(ds.samples.size() * ds.config.n_a, d);
  dali::Matrix raw_b(ds.samples.size() * ds.config.n_i, d);
  std::size_t ra = 0, rb = 0;
  for (std::size_t s = 0; s < ds.samples.size(); ++s) {
    for (std::size_t i = 0; i < encoded[s].rows(); ++i, ++ra) {
      for (std::size_t j = 0; j < d; ++j) raw_a(ra, j) = encoded[s](i, j);
    }
    for (std::size_t i = 0; i < reference[s].rows(); ++i, ++rb) {
      for (std::size_t j = 0; j < d; ++j) raw_b(rb, j) = reference[s](i, j);
    }
  }
  const std::size_t k_raw = std::min(neighbors, raw_a.rows() + raw_b.rows() - 1);
  const auto raw = dali::gap_report(raw_a, raw_b, k_raw);

  ensure_out_dir(out_dir);
  const std::string report_path = join_out(out_dir, "report.json");
  dali::write_text_file(report_path, dali::report_json(pooled, raw, k_pooled));
  note_written(report_path);
  const std::string pca_path = join_out(out_dir, "pca.csv");
  dali::write_text_file(pca_path, dali::pca_csv(pooled));
  note_written(pca_path);
  return kOk;
}

int cmd_filter(const std::string& table_path, std::size_t keep_n, const std::string& metric,
               const std::string& out_dir) {
  const auto table = dali::load_table_auto(table_path);
  const auto m = metric == "l2" ? dali::FilterMetric::l2 : dali::FilterMetric::cosine;
  const auto kept = dali::filter_pairs(table, keep_n, m);
  std::string content;
  for (const auto& id : kept) content += id + "\n";
  ensure_out_dir(out_dir);
  const std::string path = join_out(out_dir, "kept_ids.txt");
  dali::write_text_file(path, content);
  note_written(path);
  return kOk;
}

int cmd_emd(const std::string& a_path, const std::string& b_path) {
  const auto a = dali::load_cloud_json(a_path);
  const auto b = dali::load_cloud_json(b_path);
  const auto plan = dali::emd_exact(a, b);
  std::cout << dali::format_double(plan.total_cost) << "\n";
  return kOk;
}

int cmd_mmd(const std::string& a_path, const std::string& b_path, std::size_t kernels) {
  const auto a = dali::load_cloud_json(a_path);
  const auto b = dali::load_cloud_json(b_path);
  const auto spec = dali::bandwidths_from_data(a.points, b.points, kernels);
  const auto result = dali::mmd_squared(a.points, b.points, spec);
  std::cout << dali::format_double(result.mmd_squared) << "\n";
  return kOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Token-distribution alignment toolkit"};
  app.require_subcommand(1);

  CommonFlags flags;

  auto add_common = [&flags](CLI::App* sub, bool needs_config) {
    auto* config_opt = sub->add_option("--config", flags.config_path, "experiment config JSON");
    if (needs_config) config_opt->required();
    sub->add_option("--out", flags.out_dir, "output directory (created if missing)");
    auto* seed_opt = sub->add_option("--seed", flags.seed, "seed override");
    sub->callback([&flags, seed_opt]() { flags.seed_given = seed_opt->count() > 0; });
  };

  auto* generate = app.add_subcommand("generate-data", "write a synthetic paired dataset");
  add_common(generate, true);

  auto* train = app.add_subcommand("train", "train the alignment encoder per the config");
  add_common(train, true);

  auto* diagnose = app.add_subcommand("diagnose", "modality-gap report for a checkpoint");
  std::string checkpoint_path, dataset_path;
  std::size_t neighbors = 5;
  diagnose->add_option("--checkpoint", checkpoint_path, "checkpoint binary")->required();
  diagnose->add_option("--dataset", dataset_path, "dataset binary")->required();
  diagnose->add_option("--neighbors", neighbors, "k for the overlap diagnostic");
  diagnose->add_option("--out", flags.out_dir, "output directory (created if missing)");

  auto* filter = app.add_subcommand("filter", "rank and keep the closest embedding items");
  std::string table_path, metric = "cosine";
  std::size_t keep_n = 0;
  filter->add_option("--table", table_path, "embedding table (binary or CSV)")->required();
  filter->add_option("--keep", keep_n, "how many ids to keep")->required();
  filter->add_option("--metric", metric, "cosine or l2")
      ->check(CLI::IsMember({"cosine", "l2"}));
  filter->add_option("--out", flags.out_dir, "output directory (created if missing)");

  auto* emd = app.add_subcommand("emd", "exact transport cost between two cloud files");
  std::string cloud_a, cloud_b;
  emd->add_option("--a", cloud_a, "first cloud JSON")->required();
  emd->add_option("--b", cloud_b, "second cloud JSON")->required();

  auto* mmd = app.add_subcommand("mmd", "kernel mixture discrepancy between two cloud files");
  std::size_t kernels = dali::kDefaultKernelCount;
  mmd->add_option("--a", cloud_a, "first cloud JSON")->required();
  mmd->add_option("--b", cloud_b, "second cloud JSON")->required();
  mmd->add_option("--kernels", kernels, "mixture size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e);  // --help
    }
    return fail("usage", kUsage, e.what());
  }

  if (generate->parsed()) return cmd_generate_data(flags);
  if (train->parsed()) return cmd_train(flags);
  if (diagnose->parsed()) return cmd_diagnose(checkpoint_path, dataset_path, neighbors, flags.out_dir);
  if (filter->parsed()) return cmd_filter(table_path, keep_n, metric, flags.out_dir);
  if (emd->parsed()) return cmd_emd(cloud_a, cloud_b);
  if (mmd->parsed()) return cmd_mmd(cloud_a, cloud_b, kernels);
  return fail("usage", kUsage, "no subcommand given");
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const dali::TrainingError& e) {
    return fail("training", kTraining, e.what());
  } catch (const dali::IoError& e) {
    return fail("io", kIo, e.what());
  } catch (const dali::SchemaError& e) {
    return fail("schema", kSchema, e.what());
  } catch (const dali::DimensionError& e) {
    return fail("dimension", kDimension, e.what());
  } catch (const dali::ParameterError& e) {
    return fail("parameter", kParameter, e.what());
  } catch (const dali::DegenerateDataError& e) {
    return fail("degenerate", kDegenerate, e.what());
  } catch (const dali::MarginalError& e) {
    return fail("marginal", kMarginal, e.what());
  } catch (const dali::SolverError& e) {
    return fail("solver", kSolver, e.what());
  } catch (const dali::ContractError& e) {
    return fail("contract", kContract, e.what());
  } catch (const dali::BatchError& e) {
    return fail("batch", kBatch, e.what());
  } catch (const std::exception& e) {
    return fail("internal", kInternal, e.what());
  }
}
