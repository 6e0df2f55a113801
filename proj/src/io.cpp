#include "jgf/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace jgf {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

using Magic = std::array<char, 4>;
constexpr Magic kTrajectoryMagic{'J', 'C', 'T', 'R'};
constexpr Magic kWindowMagic{'J', 'C', 'W', 'S'};
constexpr Magic kCheckpointMagic{'J', 'C', 'V', 'M'};
constexpr Magic kEnsembleMagic{'J', 'C', 'E', 'N'};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  }

  template <typename T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void magic(const Magic& m) {
    out_.write(m.data(), 4);
    pod<std::uint16_t>(kFormatVersion);
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void doubles(const double* p, std::size_t count) {
    out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
  }
  void row_major(const Matrix& m) {
    const RowMatrixX<double> rm = m;
    doubles(rm.data(), static_cast<std::size_t>(rm.size()));
  }
  void finish() {
    out_.flush();
    if (!out_) fail(ErrorKind::Io, "write to '" + path_.string() + "' failed");
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path) {
    in_.open(path, std::ios::binary);
    if (!in_) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for reading");
  }

  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  void magic(const Magic& m) {
    Magic got{};
    in_.read(got.data(), 4);
    check();
    if (got != m)
      fail(ErrorKind::Format, "'" + path_.string() + "' is not a " + std::string(m.data(), 4) + " file");
    const auto version = pod<std::uint16_t>();
    if (version != kFormatVersion)
      fail(ErrorKind::Format, "'" + path_.string() + "' has unsupported version " + std::to_string(version));
  }
  std::string str() {
    const auto len = pod<std::uint32_t>();
    if (len > (1u << 20)) fail(ErrorKind::Format, "implausible string length in '" + path_.string() + "'");
    std::string s(len, '\0');
    in_.read(s.data(), len);
    check();
    return s;
  }
  void doubles(double* p, std::size_t count) {
    in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
    check();
  }
  Matrix row_major(Index rows, Index cols) {
    RowMatrixX<double> rm(rows, cols);
    doubles(rm.data(), static_cast<std::size_t>(rm.size()));
    return rm;
  }
  Vector vec(Index n) {
    Vector v(n);
    doubles(v.data(), static_cast<std::size_t>(n));
    return v;
  }

 private:
  void check() {
    if (!in_) fail(ErrorKind::Format, "unexpected end of '" + path_.string() + "'");
  }
  std::filesystem::path path_;
  std::ifstream in_;
};

std::ofstream open_text(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

// ---------------------------------------------------------------------------

void write_trajectory(const std::filesystem::path& path, const Trajectory& traj) {
  Writer w(path);
  w.magic(kTrajectoryMagic);
  w.str(traj.system_tag);
  w.pod<std::uint64_t>(static_cast<std::uint64_t>(traj.length()));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(traj.dim()));
  w.pod<double>(traj.dt);
  w.pod<double>(traj.t0);
  w.row_major(traj.states);
  w.finish();
}

Trajectory read_trajectory(const std::filesystem::path& path) {
  Reader r(path);
  r.magic(kTrajectoryMagic);
  Trajectory traj;
  traj.system_tag = r.str();
  const auto T = static_cast<Index>(r.pod<std::uint64_t>());
  const auto d = static_cast<Index>(r.pod<std::uint32_t>());
  traj.dt = r.pod<double>();
  traj.t0 = r.pod<double>();
  traj.states = r.row_major(T, d);
  return traj;
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  auto out = open_text(path);
  out << 't';
  for (Index c = 0; c < traj.dim(); ++c) out << ",x" << c;
  out << '\n';
  for (Index i = 0; i < traj.length(); ++i) {
    out << format_double(traj.time_at(i));
    for (Index c = 0; c < traj.dim(); ++c) out << ',' << format_double(traj.states(i, c));
    out << '\n';
  }
  if (!out) fail(ErrorKind::Io, "write to '" + path.string() + "' failed");
}

void write_window_set(const std::filesystem::path& path, const WindowSet& ws) {
  Writer w(path);
  w.magic(kWindowMagic);
  w.str("windows");
  w.pod<std::uint64_t>(static_cast<std::uint64_t>(ws.size()));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ws.n));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ws.d));
  w.pod<double>(ws.dt);
  w.pod<double>(ws.t_start);
  w.pod<double>(ws.t_end);
  for (Index i = 0; i < ws.size(); ++i)
    w.pod<std::uint64_t>(ws.start_rows.empty() ? 0 : static_cast<std::uint64_t>(ws.start_rows[i]));
  w.row_major(ws.data);
  w.finish();
}

WindowSet read_window_set(const std::filesystem::path& path) {
  Reader r(path);
  r.magic(kWindowMagic);
  r.str();
  WindowSet ws;
  const auto M = static_cast<Index>(r.pod<std::uint64_t>());
  ws.n = static_cast<Index>(r.pod<std::uint32_t>());
  ws.d = static_cast<Index>(r.pod<std::uint32_t>());
  ws.dt = r.pod<double>();
  ws.t_start = r.pod<double>();
  ws.t_end = r.pod<double>();
  ws.start_rows.resize(static_cast<std::size_t>(M));
  for (auto& s : ws.start_rows) s = static_cast<Index>(r.pod<std::uint64_t>());
  ws.data = r.row_major(M, ws.n * ws.d);
  return ws;
}

// ---------------------------------------------------------------------------
// Checkpoint layout after magic/version:
//   kind u8, n u32, d u32, latent u32, hidden count u32 + u32 each, kl_weight f64
//   normalizer: enabled u8, d u32, mean f64[d], std f64[d]
//   metadata: rng_seed u64, train seed u64, epochs u64, batch u64, lr f64,
//             gamma f64, normalize u8, epochs_run u64, final_loss f64,
//             loss count u64 + f64 each
//   tensors: count u32, then (u64 length + f64 data) per tensor, encoder
//            then decoder, each layer weight (column-major) then bias.

void save_checkpoint(const std::filesystem::path& path, const VaeModel& model) {
  model.validate();
  const ModelConfig& c = model.config;
  Writer w(path);
  w.magic(kCheckpointMagic);
  w.pod<std::uint8_t>(static_cast<std::uint8_t>(c.kind));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.n));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.d));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.latent_dim));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.hidden_dims.size()));
  for (Index h : c.hidden_dims) w.pod<std::uint32_t>(static_cast<std::uint32_t>(h));
  w.pod<double>(c.kl_weight);

  const Normalizer& nz = model.normalizer;
  w.pod<std::uint8_t>(nz.enabled ? 1 : 0);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(nz.dim()));
  w.doubles(nz.mean.data(), static_cast<std::size_t>(nz.dim()));
  w.doubles(nz.std.data(), static_cast<std::size_t>(nz.dim()));

  const TrainingRecord& rec = model.record;
  w.pod<std::uint64_t>(model.rng_seed);
  w.pod<std::uint64_t>(rec.train_config.seed);
  w.pod<std::uint64_t>(static_cast<std::uint64_t>(rec.train_config.epochs));
  w.pod<std::uint64_t>(static_cast<std::uint64_t>(rec.train_config.batch_size));
  w.pod<double>(rec.train_config.lr);
  w.pod<double>(rec.train_config.lr_decay_gamma);
  w.pod<std::uint8_t>(rec.train_config.normalize ? 1 : 0);
  w.pod<std::uint64_t>(static_cast<std::uint64_t>(rec.epochs_run));
  w.pod<double>(rec.final_loss);
  w.pod<std::uint64_t>(rec.epoch_losses.size());
  w.doubles(rec.epoch_losses.data(), rec.epoch_losses.size());

  const std::size_t n_tensors = 2 * (model.encoder.layers.size() + model.decoder.layers.size());
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(n_tensors));
  for (const MlpLayout* layout : {&model.encoder, &model.decoder}) {
    for (const DenseLayer& l : layout->layers) {
      w.pod<std::uint64_t>(static_cast<std::uint64_t>(l.weight_size()));
      w.doubles(model.params.data() + l.offset, static_cast<std::size_t>(l.weight_size()));
      w.pod<std::uint64_t>(static_cast<std::uint64_t>(l.out));
      w.doubles(model.params.data() + l.bias_offset(), static_cast<std::size_t>(l.out));
    }
  }
  w.finish();
}

VaeModel load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  r.magic(kCheckpointMagic);
  ModelConfig c;
  const auto kind = r.pod<std::uint8_t>();
  if (kind > 2) fail(ErrorKind::Format, "unknown model kind in checkpoint");
  c.kind = static_cast<ModelKind>(kind);
  c.n = r.pod<std::uint32_t>();
  c.d = r.pod<std::uint32_t>();
  c.latent_dim = r.pod<std::uint32_t>();
  c.hidden_dims.resize(r.pod<std::uint32_t>());
  for (auto& h : c.hidden_dims) h = r.pod<std::uint32_t>();
  c.kl_weight = r.pod<double>();

  Normalizer nz;
  nz.enabled = r.pod<std::uint8_t>() != 0;
  const auto nd = static_cast<Index>(r.pod<std::uint32_t>());
  nz.mean = r.vec(nd);
  nz.std = r.vec(nd);

  const auto rng_seed = r.pod<std::uint64_t>();
  VaeModel model = init_model(c, nz, rng_seed);
  model.normalizer = nz;
  TrainingRecord& rec = model.record;
  rec.train_config.seed = r.pod<std::uint64_t>();
  rec.train_config.epochs = static_cast<Index>(r.pod<std::uint64_t>());
  rec.train_config.batch_size = static_cast<Index>(r.pod<std::uint64_t>());
  rec.train_config.lr = r.pod<double>();
  rec.train_config.lr_decay_gamma = r.pod<double>();
  rec.train_config.normalize = r.pod<std::uint8_t>() != 0;
  rec.epochs_run = static_cast<Index>(r.pod<std::uint64_t>());
  rec.final_loss = r.pod<double>();
  rec.epoch_losses.resize(r.pod<std::uint64_t>());
  r.doubles(rec.epoch_losses.data(), rec.epoch_losses.size());

  const auto n_tensors = r.pod<std::uint32_t>();
  if (n_tensors != 2 * (model.encoder.layers.size() + model.decoder.layers.size()))
    fail(ErrorKind::Format, "checkpoint tensor count does not match its config");
  for (const MlpLayout* layout : {&model.encoder, &model.decoder}) {
    for (const DenseLayer& l : layout->layers) {
      if (r.pod<std::uint64_t>() != static_cast<std::uint64_t>(l.weight_size()))
        fail(ErrorKind::Format, "checkpoint weight tensor has wrong size");
      r.doubles(model.params.data() + l.offset, static_cast<std::size_t>(l.weight_size()));
      if (r.pod<std::uint64_t>() != static_cast<std::uint64_t>(l.out))
        fail(ErrorKind::Format, "checkpoint bias tensor has wrong size");
      r.doubles(model.params.data() + l.bias_offset(), static_cast<std::size_t>(l.out));
    }
  }
  model.validate();
  return model;
}

// ---------------------------------------------------------------------------

void write_ensembles(const std::filesystem::path& path, const EnsembleRun& run) {
  Writer w(path);
  w.magic(kEnsembleMagic);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(run.history.rows()));
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(run.history.cols()));
  w.row_major(run.history);
  w.pod<std::uint64_t>(run.steps.size());
  for (const Ensemble& e : run.steps) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(e.size()));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(e.n_out));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(e.d));
    w.doubles(e.distances.data(), static_cast<std::size_t>(e.size()));
    w.doubles(e.weights.data(), static_cast<std::size_t>(e.size()));
    for (Index i = 0; i < e.size(); ++i) {
      const Index idx = i < static_cast<Index>(e.indices.size()) ? e.indices[i] : -1;
      w.pod<std::int64_t>(static_cast<std::int64_t>(idx));
    }
    w.row_major(e.members);
  }
  w.finish();
}

EnsembleRun read_ensembles(const std::filesystem::path& path) {
  Reader r(path);
  r.magic(kEnsembleMagic);
  EnsembleRun run;
  const auto hr = static_cast<Index>(r.pod<std::uint32_t>());
  const auto hc = static_cast<Index>(r.pod<std::uint32_t>());
  run.history = r.row_major(hr, hc);
  run.steps.resize(r.pod<std::uint64_t>());
  for (Ensemble& e : run.steps) {
    const auto k = static_cast<Index>(r.pod<std::uint32_t>());
    e.n_out = r.pod<std::uint32_t>();
    e.d = r.pod<std::uint32_t>();
    e.distances = r.vec(k);
    e.weights = r.vec(k);
    e.indices.resize(static_cast<std::size_t>(k));
    for (auto& idx : e.indices) idx = static_cast<Index>(r.pod<std::int64_t>());
    e.members = r.row_major(k, e.n_out * e.d);
  }
  return run;
}

void write_ensembles_csv(const std::filesystem::path& path, const EnsembleRun& run) {
  auto out = open_text(path);
  const Index d = run.history.cols();
  out << "step,member,distance,weight,block";
  for (Index c = 0; c < d; ++c) out << ",x" << c;
  out << '\n';
  for (std::size_t s = 0; s < run.steps.size(); ++s) {
    const Ensemble& e = run.steps[s];
    for (Index i = 0; i < e.size(); ++i)
      for (Index b = 0; b < e.n_out; ++b) {
        out << s << ',' << i << ',' << format_double(e.distances(i)) << ','
            << format_double(e.weights(i)) << ',' << b;
        for (Index c = 0; c < e.d; ++c) out << ',' << format_double(e.members(i, b * e.d + c));
        out << '\n';
      }
  }
  if (!out) fail(ErrorKind::Io, "write to '" + path.string() + "' failed");
}

// ---------------------------------------------------------------------------

void KeyValueFile::set(const std::string& key, const std::string& value) {
  require(key.find('=') == std::string::npos && key.find('\n') == std::string::npos &&
              value.find('\n') == std::string::npos,
          ErrorKind::InvalidArgument, "key/value may not contain '=' in the key or newlines");
  for (auto& [k, v] : entries_)
    if (k == key) {
      v = value;
      return;
    }
  entries_.emplace_back(key, value);
}

void KeyValueFile::set(const std::string& key, double value) { set(key, format_double(value)); }
void KeyValueFile::set(const std::string& key, long long value) { set(key, std::to_string(value)); }
void KeyValueFile::set(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }

void KeyValueFile::set(const std::string& key, const std::vector<double>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ',';
    s += format_double(values[i]);
  }
  set(key, s);
}

bool KeyValueFile::contains(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return true;
  return false;
}

const std::string& KeyValueFile::get(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  fail(ErrorKind::Format, "missing key '" + key + "'");
}

double KeyValueFile::get_double(const std::string& key) const {
  const std::string& v = get(key);
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    fail(ErrorKind::Format, "key '" + key + "' is not a number: " + v);
  return out;
}

void KeyValueFile::write(const std::filesystem::path& path) const {
  auto out = open_text(path);
  for (const auto& [k, v] : entries_) out << k << '=' << v << '\n';
  if (!out) fail(ErrorKind::Io, "write to '" + path.string() + "' failed");
}

KeyValueFile KeyValueFile::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "' for reading");
  KeyValueFile kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::Format, "malformed line in '" + path.string() + "': " + line);
    kv.entries_.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return kv;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const Matrix& rows) {
  require(static_cast<Index>(header.size()) == rows.cols(), ErrorKind::ShapeMismatch,
          "CSV header width does not match data");
  auto out = open_text(path);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (Index i = 0; i < rows.rows(); ++i) {
    for (Index j = 0; j < rows.cols(); ++j) out << (j ? "," : "") << format_double(rows(i, j));
    out << '\n';
  }
  if (!out) fail(ErrorKind::Io, "write to '" + path.string() + "' failed");
}

}  // namespace jgf
