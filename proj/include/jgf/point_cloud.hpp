#pragma once

#include "jgf/core.hpp"

namespace jgf {

/// N joint samples, row j holding sample j flattened oldest state first
/// (n_out blocks of d). The newest block is the head, the rest the tail.
struct PointCloud {
  enum class Origin { Model, Oracle };

  Matrix samples;
  Index n_out = 2;
  Index d = 0;
  Origin origin = Origin::Model;
  Matrix latents;  // latent_dim x N when drawn from a model, empty otherwise
  Vector scale;    // per-component matching scale (d entries); ones means raw Euclidean

  Index size() const { return samples.rows(); }
  Index tail_states() const { return n_out - 1; }

  auto head(Index j) const { return samples.row(j).segment((n_out - 1) * d, d); }
  auto tail(Index j) const { return samples.row(j).head((n_out - 1) * d); }

  void validate() const {
    require(n_out >= 1 && d >= 1, ErrorKind::ShapeMismatch, "point cloud has invalid shape");
    require(samples.cols() == n_out * d, ErrorKind::ShapeMismatch, "point cloud width must be n_out*d");
    require(scale.size() == d, ErrorKind::ShapeMismatch, "point cloud scale must have d entries");
    require(samples.allFinite(), ErrorKind::NonFinite, "point cloud contains non-finite entries");
  }
};

}  // namespace jgf
