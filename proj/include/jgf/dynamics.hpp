// Ground-truth generators: Lorenz-63 with classic RK4 and the periodic
// Kuramoto-Sivashinsky equation with finite differences and AB2.
#pragma once

#include "jgf/core.hpp"

#include <string>

namespace jgf {

/// Time-ordered states, one per row, spaced `dt` apart starting at `t0`.
struct Trajectory {
  Matrix states;
  double dt = 1.0;
  double t0 = 0.0;
  std::string system_tag;

  Index length() const { return states.rows(); }
  Index dim() const { return states.cols(); }
  double time_at(Index row) const { return t0 + static_cast<double>(row) * dt; }
  double t_end() const { return time_at(length() - 1); }

  void validate() const;
};

// Any |entry| above this is treated as a blow-up.
inline constexpr double kBlowUpThreshold = 1e8;

// ---------------------------------------------------------------------------
// Lorenz-63

struct Lorenz63Params {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;

  void validate() const;
};

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 3, 1> lorenz63_rhs(const Eigen::MatrixBase<Derived>& s,
                                                           const Lorenz63Params& p) {
  using Scalar = typename Derived::Scalar;
  EIGEN_STATIC_ASSERT_VECTOR_ONLY(Derived);
  const Scalar x = s(0), y = s(1), z = s(2);
  return {Scalar(p.sigma) * (y - x), x * (Scalar(p.rho) - z) - y, x * y - Scalar(p.beta) * z};
}

/// One classic RK4 step of size dt.
Eigen::Vector3d lorenz63_step(const Eigen::Vector3d& x, const Lorenz63Params& params, double dt);

Trajectory integrate_lorenz63(const Eigen::Vector3d& ic, const Lorenz63Params& params, double dt,
                              Index steps);

// ---------------------------------------------------------------------------
// Kuramoto-Sivashinsky

/// Periodic grid x_j = x_min + j*dx, j = 0..n_points-1, with
/// dx = (x_max - x_min) / (n_points + 1); the upper end is not a node and
/// indices wrap modulo n_points.
struct KsGrid {
  double x_min = -25.0;
  double x_max = 25.0;
  Index n_points = 199;

  double dx() const { return (x_max - x_min) / static_cast<double>(n_points + 1); }
  double period() const { return static_cast<double>(n_points) * dx(); }
  double node(Index j) const { return x_min + static_cast<double>(j) * dx(); }
  Vector nodes() const;

  void validate() const;
};

/// -(u u_x + u_xx + u_xxxx) with second-order central stencils and periodic wraparound.
template <typename Derived>
VectorX<typename Derived::Scalar> ks_rhs(const Eigen::MatrixBase<Derived>& u, const KsGrid& grid) {
  using Scalar = typename Derived::Scalar;
  EIGEN_STATIC_ASSERT_VECTOR_ONLY(Derived);
  const Index n = grid.n_points;
  require(u.size() == n, ErrorKind::DimensionMismatch,
          "ks_rhs: state has " + std::to_string(u.size()) + " entries, grid has " +
              std::to_string(n));
  const Scalar h = Scalar(grid.dx());
  const Scalar inv2h = Scalar(1) / (Scalar(2) * h);
  const Scalar invh2 = Scalar(1) / (h * h);
  const Scalar invh4 = invh2 * invh2;
  auto wrap = [n](Index j) { return (j % n + n) % n; };

  // second differences first; the fourth difference is the second difference
  // of those, which keeps constant fields exactly stationary
  VectorX<Scalar> d2(n);
  for (Index j = 0; j < n; ++j) d2(j) = (u(wrap(j + 1)) - Scalar(2) * u(j)) + u(wrap(j - 1));

  VectorX<Scalar> out(n);
  for (Index j = 0; j < n; ++j) {
    const Scalar ux = (u(wrap(j + 1)) - u(wrap(j - 1))) * inv2h;
    const Scalar uxx = d2(j) * invh2;
    const Scalar uxxxx = ((d2(wrap(j + 1)) - Scalar(2) * d2(j)) + d2(wrap(j - 1))) * invh4;
    out(j) = -(u(j) * ux + uxx + uxxxx);
  }
  return out;
}

/// u(x, 0) = sin(x) exp(-(x - 10)^2 / 2) at the grid nodes.
Vector ks_initial_condition(const KsGrid& grid);

/// Two-step Adams-Bashforth, first step bootstrapped by one RK4 step.
/// The solver takes `substeps` internal steps of size dt/substeps per
/// recorded row, so the trajectory spacing is `dt` regardless.
Trajectory integrate_ks(const Vector& ic, const KsGrid& grid, double dt, Index steps,
                        Index substeps = 1);

/// Drops all rows with time < t_cut and re-anchors t0.
Trajectory discard_transient(const Trajectory& traj, double t_cut);

}  // namespace jgf
