#pragma once

#include "jgf/core.hpp"

#include <vector>

namespace jgf {

/// The k retained joint samples of one autoregressive step, sorted by tail
/// mismatch. Members are flattened oldest state first, like PointCloud rows.
struct Ensemble {
  Matrix members;        // k x (n_out*d)
  Vector distances;      // tail mismatch per member, ascending
  Vector weights;        // importance weights, >= 0
  std::vector<Index> indices;  // source index in the point cloud, -1 if synthesized
  Index n_out = 2;
  Index d = 0;

  Index size() const { return members.rows(); }
  /// Rows are members; block 0 is the oldest state, block n_out-1 the head.
  Matrix block(Index b) const { return members.middleCols(b * d, d); }
  Matrix heads() const { return block(n_out - 1); }
  /// The tail state one step older than the head.
  Matrix last_tail() const { return block(n_out - 2); }

  void validate() const;
};

}  // namespace jgf
