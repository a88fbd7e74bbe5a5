#include "dali/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dali/errors.hpp"

namespace dali {

namespace {

constexpr char kMagic[4] = {'D', 'A', 'L', 'I'};
constexpr std::uint32_t kFormatVersion = 1;

// ---- low-level little-endian primitives -----------------------------------

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class ByteReader {
 public:
  ByteReader(std::string data, std::string path)
      : data_(std::move(data)), path_(std::move(path)) {}

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)]))
           << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

  void expect_magic() {
    const std::string m = bytes(4, "magic");
    if (!std::equal(m.begin(), m.end(), kMagic)) {
      throw SchemaError("'" + path_ + "' does not start with the DALI magic");
    }
  }

  void expect_end() {
    if (!at_end()) {
      throw SchemaError("'" + path_ + "' has " + std::to_string(remaining()) +
                        " trailing bytes after the last record");
    }
  }

  const std::string& path() const { return path_; }

 private:
  void need(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) {
      throw SchemaError("'" + path_ + "' is truncated while reading " + std::string(what));
    }
  }

  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::string read_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("failed while reading '" + path + "'");
  return std::move(buf).str();
}

void write_binary(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.flush();
  if (!out) throw IoError("failed while writing '" + path + "'");
}

// ---- named-tensor table ----------------------------------------------------

using TensorList = std::vector<std::pair<std::string, Matrix>>;

void put_tensor_table(std::string& out, const TensorList& tensors) {
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (double v : m.data()) put_f64(out, v);
  }
}

std::map<std::string, Matrix> read_tensor_table(ByteReader& r) {
  const std::uint32_t count = r.u32();
  std::map<std::string, Matrix> out;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.bytes(name_len, "tensor name");
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (rows == 0 || cols == 0) {
      throw SchemaError("'" + r.path() + "' tensor '" + name + "' has an empty shape");
    }
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
    if (!out.emplace(name, std::move(m)).second) {
      throw SchemaError("'" + r.path() + "' repeats tensor '" + name + "'");
    }
  }
  return out;
}

Matrix take_tensor(std::map<std::string, Matrix>& table, const std::string& name,
                   const std::string& path) {
  auto it = table.find(name);
  if (it == table.end()) {
    throw SchemaError("'" + path + "' is missing tensor '" + name + "'");
  }
  Matrix m = std::move(it->second);
  table.erase(it);
  return m;
}

void reject_leftovers(const std::map<std::string, Matrix>& table, const std::string& path) {
  if (!table.empty()) {
    throw SchemaError("'" + path + "' contains an unrecognized tensor '" +
                      table.begin()->first + "'");
  }
}

Matrix scalar_tensor(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}

double take_scalar(std::map<std::string, Matrix>& table, const std::string& name,
                   const std::string& path) {
  Matrix m = take_tensor(table, name, path);
  if (m.rows() != 1 || m.cols() != 1) {
    throw SchemaError("'" + path + "' tensor '" + name + "' must be 1x1");
  }
  return m(0, 0);
}

std::size_t take_count(std::map<std::string, Matrix>& table, const std::string& name,
                       const std::string& path) {
  const double v = take_scalar(table, name, path);
  if (!(v >= 0.0) || v != std::floor(v) || v > 9e15) {
    throw SchemaError("'" + path + "' tensor '" + name + "' must hold a nonnegative integer");
  }
  return static_cast<std::size_t>(v);
}

std::string header_bytes() {
  std::string out(kMagic, 4);
  put_u32(out, kFormatVersion);
  return out;
}

ByteReader open_versioned(const std::string& path) {
  ByteReader r(read_binary(path), path);
  r.expect_magic();
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw SchemaError("'" + path + "' has unsupported format version " +
                      std::to_string(version));
  }
  return r;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, end);
  // Keep scalars visibly floating-point so downstream parsers never see a
  // bare integer change type between runs.
  if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
      s.find("inf") == std::string::npos && s.find("nan") == std::string::npos) {
    s += ".0";
  }
  return s;
}

// ---- checkpoints -----------------------------------------------------------

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  validate_encoder(ckpt.encoder);
  TensorList tensors = {{"encoder.w1", ckpt.encoder.w1},
                        {"encoder.b1", ckpt.encoder.b1},
                        {"encoder.w2", ckpt.encoder.w2},
                        {"encoder.b2", ckpt.encoder.b2}};
  if (ckpt.has_attention) {
    attention_dim(ckpt.attention);
    tensors.emplace_back("attention.wq_a", ckpt.attention.wq_a);
    tensors.emplace_back("attention.wk_a", ckpt.attention.wk_a);
    tensors.emplace_back("attention.wv_a", ckpt.attention.wv_a);
    tensors.emplace_back("attention.wq_i", ckpt.attention.wq_i);
    tensors.emplace_back("attention.wk_i", ckpt.attention.wk_i);
    tensors.emplace_back("attention.wv_i", ckpt.attention.wv_i);
    tensors.emplace_back("attention.tau", scalar_tensor(ckpt.attention.tau));
  }
  std::string out = header_bytes();
  put_tensor_table(out, tensors);
  write_binary(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  ByteReader r = open_versioned(path);
  auto table = read_tensor_table(r);
  r.expect_end();

  Checkpoint ckpt;
  ckpt.encoder.w1 = take_tensor(table, "encoder.w1", path);
  ckpt.encoder.b1 = take_tensor(table, "encoder.b1", path);
  ckpt.encoder.w2 = take_tensor(table, "encoder.w2", path);
  ckpt.encoder.b2 = take_tensor(table, "encoder.b2", path);
  if (table.count("attention.wq_a") != 0) {
    ckpt.has_attention = true;
    ckpt.attention.wq_a = take_tensor(table, "attention.wq_a", path);
    ckpt.attention.wk_a = take_tensor(table, "attention.wk_a", path);
    ckpt.attention.wv_a = take_tensor(table, "attention.wv_a", path);
    ckpt.attention.wq_i = take_tensor(table, "attention.wq_i", path);
    ckpt.attention.wk_i = take_tensor(table, "attention.wk_i", path);
    ckpt.attention.wv_i = take_tensor(table, "attention.wv_i", path);
    ckpt.attention.tau = take_scalar(table, "attention.tau", path);
  }
  reject_leftovers(table, path);

  try {
    validate_encoder(ckpt.encoder);
    if (ckpt.has_attention) attention_dim(ckpt.attention);
  } catch (const Error& e) {
    throw SchemaError("'" + path + "' holds inconsistent tensors: " + e.what());
  }
  return ckpt;
}

// ---- datasets ---------------------------------------------------------------

void save_dataset(const std::string& path, const PairedDataset& ds) {
  const SynthConfig& cfg = ds.config;
  TensorList tensors = {
      {"config.n_samples", scalar_tensor(static_cast<double>(cfg.n_samples))},
      {"config.n_a", scalar_tensor(static_cast<double>(cfg.n_a))},
      {"config.n_i", scalar_tensor(static_cast<double>(cfg.n_i))},
      {"config.d_latent", scalar_tensor(static_cast<double>(cfg.d_latent))},
      {"config.d_in", scalar_tensor(static_cast<double>(cfg.d_in))},
      {"config.d", scalar_tensor(static_cast<double>(cfg.d))},
      {"config.frozen_hidden", scalar_tensor(static_cast<double>(cfg.frozen_hidden))},
      {"config.mismatch_rho", scalar_tensor(cfg.mismatch_rho)},
      {"config.noise_sigma", scalar_tensor(cfg.noise_sigma)},
      // Split so 64-bit seeds survive the f64 payload exactly.
      {"seed.lo", scalar_tensor(static_cast<double>(ds.seed & 0xffffffffull))},
      {"seed.hi", scalar_tensor(static_cast<double>(ds.seed >> 32))},
      {"frozen.w1", ds.frozen.w1},
      {"frozen.b1", ds.frozen.b1},
      {"frozen.w2", ds.frozen.w2},
      {"frozen.b2", ds.frozen.b2},
  };
  for (std::size_t s = 0; s < ds.samples.size(); ++s) {
    const std::string prefix = "sample." + std::to_string(s) + ".";
    const Sample& sample = ds.samples[s];
    tensors.emplace_back(prefix + "raw_a", sample.raw_a);
    tensors.emplace_back(prefix + "tokens_b", sample.tokens_b);
    Matrix mask(1, sample.mismatch_mask.size());
    for (std::size_t j = 0; j < sample.mismatch_mask.size(); ++j) {
      mask(0, j) = sample.mismatch_mask[j] != 0 ? 1.0 : 0.0;
    }
    tensors.emplace_back(prefix + "mask", std::move(mask));
  }
  std::string out = header_bytes();
  put_tensor_table(out, tensors);
  write_binary(path, out);
}

PairedDataset load_dataset(const std::string& path) {
  ByteReader r = open_versioned(path);
  auto table = read_tensor_table(r);
  r.expect_end();

  PairedDataset ds;
  ds.config.n_samples = take_count(table, "config.n_samples", path);
  ds.config.n_a = take_count(table, "config.n_a", path);
  ds.config.n_i = take_count(table, "config.n_i", path);
  ds.config.d_latent = take_count(table, "config.d_latent", path);
  ds.config.d_in = take_count(table, "config.d_in", path);
  ds.config.d = take_count(table, "config.d", path);
  ds.config.frozen_hidden = take_count(table, "config.frozen_hidden", path);
  ds.config.mismatch_rho = take_scalar(table, "config.mismatch_rho", path);
  ds.config.noise_sigma = take_scalar(table, "config.noise_sigma", path);
  const std::uint64_t lo = static_cast<std::uint64_t>(take_count(table, "seed.lo", path));
  const std::uint64_t hi = static_cast<std::uint64_t>(take_count(table, "seed.hi", path));
  ds.seed = lo | (hi << 32);
  ds.frozen.w1 = take_tensor(table, "frozen.w1", path);
  ds.frozen.b1 = take_tensor(table, "frozen.b1", path);
  ds.frozen.w2 = take_tensor(table, "frozen.w2", path);
  ds.frozen.b2 = take_tensor(table, "frozen.b2", path);

  ds.samples.resize(ds.config.n_samples);
  for (std::size_t s = 0; s < ds.samples.size(); ++s) {
    const std::string prefix = "sample." + std::to_string(s) + ".";
    Sample& sample = ds.samples[s];
    sample.latent_id = s;
    sample.raw_a = take_tensor(table, prefix + "raw_a", path);
    sample.tokens_b = take_tensor(table, prefix + "tokens_b", path);
    Matrix mask = take_tensor(table, prefix + "mask", path);
    if (mask.rows() != 1) {
      throw SchemaError("'" + path + "' tensor '" + prefix + "mask' must be a row vector");
    }
    sample.mismatch_mask.resize(mask.cols());
    for (std::size_t j = 0; j < mask.cols(); ++j) {
      const double v = mask(0, j);
      if (v != 0.0 && v != 1.0) {
        throw SchemaError("'" + path + "' tensor '" + prefix + "mask' holds a non-boolean entry");
      }
      sample.mismatch_mask[j] = v == 1.0 ? 1 : 0;
    }
  }
  reject_leftovers(table, path);

  try {
    validate_encoder(ds.frozen);
  } catch (const Error& e) {
    throw SchemaError("'" + path + "' frozen encoder is inconsistent: " + e.what());
  }
  for (std::size_t s = 0; s < ds.samples.size(); ++s) {
    const Sample& sample = ds.samples[s];
    if (sample.raw_a.rows() != ds.config.n_a || sample.raw_a.cols() != ds.config.d_in ||
        sample.tokens_b.rows() != ds.config.n_i || sample.tokens_b.cols() != ds.config.d ||
        sample.mismatch_mask.size() != ds.config.n_i) {
      throw SchemaError("'" + path + "' sample " + std::to_string(s) +
                        " does not match the stored config shapes");
    }
  }
  return ds;
}

// ---- embedding tables --------------------------------------------------------

void save_table(const std::string& path, const EmbeddingTable& table) {
  validate_table(table);
  std::string out(kMagic, 4);
  for (const auto& item : table.items) {
    put_u32(out, static_cast<std::uint32_t>(item.id.size()));
    out.append(item.id);
    put_u32(out, static_cast<std::uint32_t>(item.frames.size()));
    put_u32(out, static_cast<std::uint32_t>(item.companion.size()));
    for (const auto& frame : item.frames) {
      for (double v : frame) put_f64(out, v);
    }
    for (double v : item.companion) put_f64(out, v);
  }
  write_binary(path, out);
}

EmbeddingTable load_table(const std::string& path) {
  ByteReader r(read_binary(path), path);
  r.expect_magic();
  EmbeddingTable table;
  while (!r.at_end()) {
    EmbeddingItem item;
    const std::uint32_t id_len = r.u32();
    item.id = r.bytes(id_len, "item id");
    const std::uint32_t frame_count = r.u32();
    const std::uint32_t d = r.u32();
    if (frame_count == 0 || d == 0) {
      throw SchemaError("'" + path + "' item '" + item.id + "' has an empty shape");
    }
    item.frames.assign(frame_count, std::vector<double>(d));
    for (auto& frame : item.frames) {
      for (double& v : frame) v = r.f64();
    }
    item.companion.resize(d);
    for (double& v : item.companion) v = r.f64();
    table.items.push_back(std::move(item));
  }
  try {
    validate_table(table);
  } catch (const Error& e) {
    throw SchemaError("'" + path + "': " + e.what());
  }
  return table;
}

EmbeddingTable load_table_csv(const std::string& path) {
  const std::string text = read_binary(path);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;

  // Preserve first-appearance order while collecting frames per id.
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::pair<long long, std::vector<double>>>> frames;
  std::map<std::string, std::vector<double>> companions;
  std::size_t d = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() < 3) {
      throw SchemaError("'" + path + "' line " + std::to_string(line_no) +
                        " needs id,frame_index and at least one value");
    }

    long long frame_index = 0;
    const auto& fi = fields[1];
    auto [ptr, ec] = std::from_chars(fi.data(), fi.data() + fi.size(), frame_index);
    if (ec != std::errc{} || ptr != fi.data() + fi.size()) {
      if (line_no == 1) continue;  // header row
      throw SchemaError("'" + path + "' line " + std::to_string(line_no) +
                        " has a non-integer frame index '" + fi + "'");
    }

    std::vector<double> values(fields.size() - 2);
    for (std::size_t i = 2; i < fields.size(); ++i) {
      const auto& f = fields[i];
      char* end = nullptr;
      values[i - 2] = std::strtod(f.c_str(), &end);
      if (f.empty() || end != f.c_str() + f.size()) {
        throw SchemaError("'" + path + "' line " + std::to_string(line_no) +
                          " has a non-numeric value '" + f + "'");
      }
    }
    if (d == 0) d = values.size();
    if (values.size() != d) {
      throw SchemaError("'" + path + "' line " + std::to_string(line_no) + " has " +
                        std::to_string(values.size()) + " values but the table dimension is " +
                        std::to_string(d));
    }

    const std::string& id = fields[0];
    if (frames.find(id) == frames.end() && companions.find(id) == companions.end()) {
      order.push_back(id);
    }
    if (frame_index < 0) {
      if (!companions.emplace(id, std::move(values)).second) {
        throw SchemaError("'" + path + "' line " + std::to_string(line_no) +
                          " repeats the companion row for '" + id + "'");
      }
    } else {
      frames[id].emplace_back(frame_index, std::move(values));
    }
  }

  EmbeddingTable table;
  for (const auto& id : order) {
    EmbeddingItem item;
    item.id = id;
    auto cit = companions.find(id);
    if (cit == companions.end()) {
      throw SchemaError("'" + path + "' item '" + id + "' has no companion row");
    }
    item.companion = std::move(cit->second);
    auto fit = frames.find(id);
    if (fit == frames.end()) {
      throw SchemaError("'" + path + "' item '" + id + "' has no frame rows");
    }
    std::stable_sort(fit->second.begin(), fit->second.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [index, values] : fit->second) item.frames.push_back(std::move(values));
    table.items.push_back(std::move(item));
  }
  try {
    validate_table(table);
  } catch (const Error& e) {
    throw SchemaError("'" + path + "': " + e.what());
  }
  return table;
}

EmbeddingTable load_table_auto(const std::string& path) {
  const std::string head = read_binary(path);
  if (head.size() >= 4 && std::equal(head.begin(), head.begin() + 4, kMagic)) {
    return load_table(path);
  }
  return load_table_csv(path);
}

// ---- point-cloud JSON ---------------------------------------------------------

namespace {

using nlohmann::json;

json parse_json(const std::string& text, const std::string& path) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) {
    throw SchemaError("'" + path + "' is not valid JSON");
  }
  return doc;
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where, const std::string& path) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (allowed.find(key) == allowed.end()) {
      throw SchemaError("'" + path + "' has unknown key '" + key + "' in " + where);
    }
  }
}

double number_field(const json& obj, const char* key, double fallback, const std::string& path) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) {
    throw SchemaError("'" + path + "' field '" + std::string(key) + "' must be a number");
  }
  return v.get<double>();
}

std::size_t count_field(const json& obj, const char* key, std::size_t fallback,
                        const std::string& path) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned()) {
    throw SchemaError("'" + path + "' field '" + std::string(key) +
                      "' must be a nonnegative integer");
  }
  return v.get<std::size_t>();
}

bool bool_field(const json& obj, const char* key, bool fallback, const std::string& path) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean()) {
    throw SchemaError("'" + path + "' field '" + std::string(key) + "' must be a boolean");
  }
  return v.get<bool>();
}

std::string string_field(const json& obj, const char* key, const std::string& fallback,
                         const std::string& path) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) {
    throw SchemaError("'" + path + "' field '" + std::string(key) + "' must be a string");
  }
  return v.get<std::string>();
}

}  // namespace

WeightedPointCloud load_cloud_json(const std::string& path) {
  const json doc = parse_json(read_binary(path), path);
  if (!doc.is_object()) throw SchemaError("'" + path + "' must be a JSON object");
  reject_unknown_keys(doc, {"points", "weights"}, "the cloud document", path);
  if (!doc.contains("points") || !doc.at("points").is_array() || doc.at("points").empty()) {
    throw SchemaError("'" + path + "' needs a nonempty 'points' array");
  }
  const json& points = doc.at("points");
  const std::size_t n = points.size();
  std::size_t d = 0;
  Matrix m;
  for (std::size_t i = 0; i < n; ++i) {
    const json& row = points.at(i);
    if (!row.is_array() || row.empty()) {
      throw SchemaError("'" + path + "' point " + std::to_string(i) +
                        " must be a nonempty array");
    }
    if (i == 0) {
      d = row.size();
      m = Matrix(n, d);
    }
    if (row.size() != d) {
      throw SchemaError("'" + path + "' point " + std::to_string(i) + " has " +
                        std::to_string(row.size()) + " coordinates, expected " +
                        std::to_string(d));
    }
    for (std::size_t j = 0; j < d; ++j) {
      const json& v = row.at(j);
      if (!v.is_number()) {
        throw SchemaError("'" + path + "' point " + std::to_string(i) +
                          " has a non-numeric coordinate");
      }
      m(i, j) = v.get<double>();
    }
  }
  try {
    if (!doc.contains("weights")) return uniform_cloud(std::move(m));
    const json& weights = doc.at("weights");
    if (!weights.is_array() || weights.size() != n) {
      throw SchemaError("'" + path + "' weights must list one entry per point");
    }
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!weights.at(i).is_number()) {
        throw SchemaError("'" + path + "' weight " + std::to_string(i) + " is not a number");
      }
      w[i] = weights.at(i).get<double>();
    }
    return make_cloud(std::move(m), std::move(w));
  } catch (const ParameterError& e) {
    // Bad weights in a cloud document are a document problem.
    throw SchemaError("'" + path + "': " + e.what());
  }
}

// ---- experiment configs --------------------------------------------------------

ExperimentConfig parse_experiment_config_impl(const std::string& text, const std::string& path) {
  const json doc = parse_json(text, path);
  if (!doc.is_object()) throw SchemaError("'" + path + "' must be a JSON object");
  reject_unknown_keys(doc, {"version", "seed", "dataset", "train", "outputs"},
                      "the experiment document", path);

  if (doc.contains("version")) {
    const json& v = doc.at("version");
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() != 1) {
      throw SchemaError("'" + path + "' has unsupported config version");
    }
  }

  ExperimentConfig cfg;
  if (doc.contains("seed")) {
    const json& v = doc.at("seed");
    if (!v.is_number_unsigned()) {
      throw SchemaError("'" + path + "' field 'seed' must be a nonnegative integer");
    }
    cfg.seed = v.get<std::uint64_t>();
  }

  if (doc.contains("dataset")) {
    const json& ds = doc.at("dataset");
    if (!ds.is_object()) throw SchemaError("'" + path + "' field 'dataset' must be an object");
    reject_unknown_keys(ds,
                        {"n_samples", "n_a", "n_i", "d_latent", "d_in", "d", "frozen_hidden",
                         "mismatch_rho", "noise_sigma"},
                        "'dataset'", path);
    cfg.dataset.n_samples = count_field(ds, "n_samples", cfg.dataset.n_samples, path);
    cfg.dataset.n_a = count_field(ds, "n_a", cfg.dataset.n_a, path);
    cfg.dataset.n_i = count_field(ds, "n_i", cfg.dataset.n_i, path);
    cfg.dataset.d_latent = count_field(ds, "d_latent", cfg.dataset.d_latent, path);
    cfg.dataset.d_in = count_field(ds, "d_in", cfg.dataset.d_in, path);
    cfg.dataset.d = count_field(ds, "d", cfg.dataset.d, path);
    cfg.dataset.frozen_hidden = count_field(ds, "frozen_hidden", cfg.dataset.frozen_hidden, path);
    cfg.dataset.mismatch_rho = number_field(ds, "mismatch_rho", cfg.dataset.mismatch_rho, path);
    cfg.dataset.noise_sigma = number_field(ds, "noise_sigma", cfg.dataset.noise_sigma, path);
  }

  if (doc.contains("train")) {
    const json& tr = doc.at("train");
    if (!tr.is_object()) throw SchemaError("'" + path + "' field 'train' must be an object");
    reject_unknown_keys(tr,
                        {"method", "epochs", "batch_size", "learning_rate", "hidden_dim",
                         "kernel_count", "attention_tau", "lambda_start", "lambda_end",
                         "lambda_ramp_epochs", "uniform_first_epoch", "contrastive_temperature",
                         "contrastive_symmetric", "adam_beta1", "adam_beta2", "adam_eps",
                         "gap_neighbors", "schedule_steps"},
                        "'train'", path);
    TrainConfig& t = cfg.train;
    if (tr.contains("method")) {
      try {
        t.method = method_from_name(string_field(tr, "method", "", path));
      } catch (const ParameterError& e) {
        throw SchemaError("'" + path + "': " + e.what());
      }
    }
    t.epochs = count_field(tr, "epochs", t.epochs, path);
    t.batch_size = count_field(tr, "batch_size", t.batch_size, path);
    t.learning_rate = number_field(tr, "learning_rate", t.learning_rate, path);
    t.hidden_dim = count_field(tr, "hidden_dim", t.hidden_dim, path);
    t.kernel_count = count_field(tr, "kernel_count", t.kernel_count, path);
    t.attention_tau = number_field(tr, "attention_tau", t.attention_tau, path);
    t.attentive.lambda_schedule.start =
        number_field(tr, "lambda_start", t.attentive.lambda_schedule.start, path);
    t.attentive.lambda_schedule.end =
        number_field(tr, "lambda_end", t.attentive.lambda_schedule.end, path);
    t.attentive.lambda_schedule.ramp_epochs =
        count_field(tr, "lambda_ramp_epochs", t.attentive.lambda_schedule.ramp_epochs, path);
    t.attentive.lambda_schedule.uniform_first_epoch =
        bool_field(tr, "uniform_first_epoch", t.attentive.lambda_schedule.uniform_first_epoch,
                   path);
    t.contrastive.temperature =
        number_field(tr, "contrastive_temperature", t.contrastive.temperature, path);
    t.contrastive.symmetric =
        bool_field(tr, "contrastive_symmetric", t.contrastive.symmetric, path);
    t.adam_beta1 = number_field(tr, "adam_beta1", t.adam_beta1, path);
    t.adam_beta2 = number_field(tr, "adam_beta2", t.adam_beta2, path);
    t.adam_eps = number_field(tr, "adam_eps", t.adam_eps, path);
    t.gap_neighbors = count_field(tr, "gap_neighbors", t.gap_neighbors, path);
    t.schedule_steps = count_field(tr, "schedule_steps", t.schedule_steps, path);
  }

  if (doc.contains("outputs")) {
    const json& out = doc.at("outputs");
    if (!out.is_object()) throw SchemaError("'" + path + "' field 'outputs' must be an object");
    reject_unknown_keys(out, {"dataset", "checkpoint", "history", "report", "pca"}, "'outputs'",
                        path);
    cfg.outputs.dataset = string_field(out, "dataset", cfg.outputs.dataset, path);
    cfg.outputs.checkpoint = string_field(out, "checkpoint", cfg.outputs.checkpoint, path);
    cfg.outputs.history = string_field(out, "history", cfg.outputs.history, path);
    cfg.outputs.report = string_field(out, "report", cfg.outputs.report, path);
    cfg.outputs.pca = string_field(out, "pca", cfg.outputs.pca, path);
  }

  cfg.train.seed = cfg.seed;
  return cfg;
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  return parse_experiment_config_impl(text, "<inline config>");
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return parse_experiment_config_impl(read_binary(path), path);
}

// ---- emitted documents -----------------------------------------------------------

namespace {

void append_gap_fields(std::string& out, const GapReport& r, const char* indent) {
  out += indent;
  out += "\"centroid_distance\": " + format_double(r.centroid_distance) + ",\n";
  out += indent;
  out += "\"normalized_centroid_distance\": " + format_double(r.normalized_centroid_distance) +
         ",\n";
  out += indent;
  out += "\"explained_variance\": [" + format_double(r.explained_variance[0]) + ", " +
         format_double(r.explained_variance[1]) + "],\n";
  out += indent;
  out += "\"overlap_fraction\": " + format_double(r.overlap_fraction) + "\n";
}

}  // namespace

std::string history_json(Method method, const TrainHistory& history) {
  std::string out = "{\n  \"version\": 1,\n";
  out += "  \"method\": \"" + method_name(method) + "\",\n";
  out += "  \"epochs\": [";
  for (std::size_t e = 0; e < history.epochs.size(); ++e) {
    const EpochRecord& rec = history.epochs[e];
    out += e == 0 ? "\n" : ",\n";
    out += "    {\n";
    out += "      \"epoch\": " + std::to_string(rec.epoch) + ",\n";
    out += "      \"mean_loss\": " + format_double(rec.mean_loss) + ",\n";
    out += "      \"first_batch_loss\": " + format_double(rec.first_batch_loss) + ",\n";
    out += "      \"lambda\": " + format_double(rec.lambda) + ",\n";
    out += std::string("      \"uniform_weights\": ") +
           (rec.uniform_weights ? "true" : "false") + ",\n";
    out += "      \"centroid_distance\": " + format_double(rec.centroid_distance) + ",\n";
    out += "      \"normalized_centroid_distance\": " +
           format_double(rec.normalized_centroid_distance) + ",\n";
    out += "      \"overlap_fraction\": " + format_double(rec.overlap_fraction) + "\n";
    out += "    }";
  }
  out += history.epochs.empty() ? "]\n" : "\n  ]\n";
  out += "}\n";
  return out;
}

std::string report_json(const GapReport& pooled, const GapReport& raw_tokens,
                        std::size_t neighbors) {
  std::string out = "{\n  \"version\": 1,\n";
  out += "  \"neighbors\": " + std::to_string(neighbors) + ",\n";
  out += "  \"pooled\": {\n";
  append_gap_fields(out, pooled, "    ");
  out += "  },\n";
  out += "  \"raw_tokens\": {\n";
  append_gap_fields(out, raw_tokens, "    ");
  out += "  }\n}\n";
  return out;
}

std::string pca_csv(const GapReport& pooled) {
  std::string out = "population,label,pc1,pc2\n";
  auto rows = [&out](const Matrix& coords, const char* population) {
    for (std::size_t i = 0; i < coords.rows(); ++i) {
      out += population;
      out += ',' + std::to_string(i) + ',' + format_double(coords(i, 0)) + ',' +
             format_double(coords(i, 1)) + '\n';
    }
  };
  rows(pooled.pca_coords_a, "trainable");
  rows(pooled.pca_coords_b, "reference");
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  write_binary(path, content);
}

std::string read_text_file(const std::string& path) { return read_binary(path); }

}  // namespace dali
