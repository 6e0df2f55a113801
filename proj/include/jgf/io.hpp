// Binary and text persistence. All binary formats are little-endian and
// start with a four-byte magic and a u16 version.
//
//   JCTR trajectory: tag (u32 length + UTF-8), T u64, d u32, dt f64, t0 f64,
//                    T*d f64 row-major.
//   JCWS windows:    tag, M u64, n u32, d u32, dt f64, t_start f64, t_end f64,
//                    M start rows (u64), M*n*d f64 row-major.
//   JCVM checkpoint: see save_checkpoint.
//   JCEN ensembles:  per-step ensembles of a forecast run.
#pragma once

#include "jgf/core.hpp"
#include "jgf/dynamics.hpp"
#include "jgf/ensemble.hpp"
#include "jgf/genmodel.hpp"
#include "jgf/windows.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace jgf {

inline constexpr std::uint16_t kFormatVersion = 1;

void write_trajectory(const std::filesystem::path& path, const Trajectory& traj);
Trajectory read_trajectory(const std::filesystem::path& path);
/// Header `t,x0,...,x{d-1}`, full round-trip precision.
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);

void write_window_set(const std::filesystem::path& path, const WindowSet& ws);
WindowSet read_window_set(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const VaeModel& model);
VaeModel load_checkpoint(const std::filesystem::path& path);

struct EnsembleRun {
  Matrix history;  // observed states preceding the first step, oldest first
  std::vector<Ensemble> steps;
};

void write_ensembles(const std::filesystem::path& path, const EnsembleRun& run);
EnsembleRun read_ensembles(const std::filesystem::path& path);
/// Long-format CSV: step,member,distance,weight,block,x0..x{d-1}.
void write_ensembles_csv(const std::filesystem::path& path, const EnsembleRun& run);

/// Ordered `key=value` lines.
class KeyValueFile {
 public:
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, long long value);
  void set(const std::string& key, std::uint64_t value);
  void set(const std::string& key, const std::vector<double>& values);

  bool contains(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  void write(const std::filesystem::path& path) const;
  static KeyValueFile read(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Shortest decimal form that round-trips the double exactly.
std::string format_double(double v);

/// Writes a header row and matrix rows as CSV.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const Matrix& rows);

}  // namespace jgf
