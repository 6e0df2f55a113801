// Entropic optimal transport between uniform empirical point clouds, and
// the exact one-dimensional 2-Wasserstein distance used to validate it.
#pragma once

#include "jgf/core.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace jgf {

struct SinkhornConfig {
  /// Absolute regularization in squared-distance units; <= 0 selects
  /// epsilon_scale * median(C).
  double epsilon = 0.0;
  double epsilon_scale = 0.01;
  Index max_iters = 500;
  /// L1 violation of the row marginal.
  double convergence_tol = 1e-6;
  /// Warm-start through a geometric ladder of larger epsilons first.
  bool epsilon_scaling = true;
  /// Over-relaxation factor for the potential updates at the target
  /// epsilon, in [1, 2); 1 is plain Sinkhorn.
  double overrelaxation = 1.8;

  void validate() const;
};

struct SinkhornResult {
  double w2 = 0.0;        // sqrt(<P, C>)
  double cost = 0.0;      // <P, C>
  double epsilon = 0.0;   // regularization actually used
  Index iterations = 0;   // at the target epsilon
  double marginal_error = 0.0;
  bool converged = false;
};

/// Squared Euclidean cost between the rows of A (m x d) and B (p x d).
Matrix squared_distance_matrix(const Matrix& A, const Matrix& B);

double median_of(const Matrix& values);

/// Log-domain Sinkhorn. Non-convergence within max_iters is reported through
/// `converged` and the best available estimate is returned.
SinkhornResult sinkhorn_w2(const Matrix& A, const Matrix& B, const SinkhornConfig& cfg = {});

/// Sorted-quantile W2 between equally sized 1-D samples.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar exact_w2_1d(const Eigen::DenseBase<DerivedA>& a,
                                      const Eigen::DenseBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  require(a.size() == b.size(), ErrorKind::SizeMismatch,
          "exact_w2_1d needs equal sample sizes, got " + std::to_string(a.size()) + " and " +
              std::to_string(b.size()));
  require(a.size() >= 1, ErrorKind::SizeMismatch, "exact_w2_1d needs nonempty samples");
  std::vector<Scalar> sa(static_cast<std::size_t>(a.size()));
  std::vector<Scalar> sb(static_cast<std::size_t>(b.size()));
  for (Index i = 0; i < b.size(); ++i) sb[static_cast<std::size_t>(i)] = b.derived().coeff(i);
  for (Index i = 0; i < a.size(); ++i) sa[static_cast<std::size_t>(i)] = a.derived().coeff(i);
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  Scalar acc(0);
  for (std::size_t i = 0; i < sa.size(); ++i) acc += (sa[i] - sb[i]) * (sa[i] - sb[i]);
  return std::sqrt(acc / Scalar(sa.size()));
}

}  // namespace jgf
