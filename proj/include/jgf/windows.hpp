// Lagged joint windows (x_{t-(n-1)dt}, ..., x_t) and the normalizer shared
// between training and inference.
#pragma once

#include "jgf/core.hpp"
#include "jgf/dynamics.hpp"
#include "jgf/random.hpp"

#include <utility>
#include <vector>

namespace jgf {

/// M windows of n consecutive states; row i of `data` is window i flattened
/// oldest block first (length n*d).
struct WindowSet {
  Matrix data;
  Index n = 2;
  Index d = 0;
  double dt = 1.0;
  double t_start = 0.0;  // time of the first state admitted by the sampling range
  double t_end = 0.0;    // exclusive upper bound of the sampling range
  std::vector<Index> start_rows;  // source row of each window's oldest state

  Index size() const { return data.rows(); }
  Matrix window(Index i) const;
  void validate() const;
};

enum class Sampling { UniformRandom, AllContiguous };

Sampling parse_sampling(const std::string& name);
const char* to_string(Sampling s) noexcept;

/// Windows whose states all have time in [t_a, t_b). UniformRandom draws
/// `count` windows with replacement; AllContiguous takes every window in
/// order, capped at `count` when count > 0.
WindowSet build_windows(const Trajectory& traj, Index n, Index count,
                        std::pair<double, double> range, Sampling sampling, Rng& rng);

template <typename Derived>
VectorX<typename Derived::Scalar> flatten_window(const Eigen::MatrixBase<Derived>& window) {
  // oldest row first: a row-major copy lays the blocks out in time order
  const RowMatrixX<typename Derived::Scalar> rm = window;
  return Eigen::Map<const VectorX<typename Derived::Scalar>>(rm.data(), rm.size());
}

template <typename Derived>
MatrixX<typename Derived::Scalar> unflatten_window(const Eigen::MatrixBase<Derived>& flat,
                                                   Index n, Index d) {
  require(flat.size() == n * d, ErrorKind::ShapeMismatch, "unflatten_window: size mismatch");
  const VectorX<typename Derived::Scalar> v = flat;
  return Eigen::Map<const RowMatrixX<typename Derived::Scalar>>(v.data(), n, d);
}

/// Per-component z-scoring. A disabled normalizer is the identity.
struct Normalizer {
  Vector mean;
  Vector std;
  bool enabled = true;

  static constexpr double kStdFloor = 1e-8;

  static Normalizer identity(Index d);
  Index dim() const { return mean.size(); }

  /// Applies to vectors or rows laid out as consecutive d-blocks.
  Vector apply(const Vector& x) const;
  Vector invert(const Vector& x) const;
  Matrix apply_rows(const Matrix& rows) const;
  Matrix invert_rows(const Matrix& rows) const;

  /// Per-block scale used to measure distances in normalized units.
  Vector block_scale(Index blocks) const;
};

Normalizer fit_normalizer(const WindowSet& ws);

}  // namespace jgf
