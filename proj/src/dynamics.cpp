#include "jgf/dynamics.hpp"

#include <cmath>

namespace jgf {

namespace {

void check_bounded(const Vector& x, const char* system, Index step) {
  if (!x.allFinite() || x.cwiseAbs().maxCoeff() > kBlowUpThreshold)
    fail(ErrorKind::NonFinite,
         std::string(system) + " state diverged at step " + std::to_string(step));
}

template <typename Rhs>
Vector rk4_step(const Vector& x, double h, Rhs&& f) {
  const Vector k1 = f(x);
  const Vector k2 = f(x + 0.5 * h * k1);
  const Vector k3 = f(x + 0.5 * h * k2);
  const Vector k4 = f(x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

void Trajectory::validate() const {
  require(states.rows() >= 1, ErrorKind::EmptyResult, "trajectory has no states");
  require(dt > 0.0 && std::isfinite(dt), ErrorKind::InvalidArgument, "trajectory dt must be > 0");
  require(states.allFinite(), ErrorKind::NonFinite, "trajectory contains non-finite entries");
}

void Lorenz63Params::validate() const {
  require(std::isfinite(sigma) && std::isfinite(rho) && std::isfinite(beta),
          ErrorKind::InvalidArgument, "Lorenz-63 parameters must be finite");
  require(beta > 0.0, ErrorKind::InvalidArgument, "Lorenz-63 beta must be positive");
}

Eigen::Vector3d lorenz63_step(const Eigen::Vector3d& x, const Lorenz63Params& params, double dt) {
  auto f = [&](const Vector& s) -> Vector { return lorenz63_rhs(s, params); };
  return rk4_step(x, dt, f);
}

Trajectory integrate_lorenz63(const Eigen::Vector3d& ic, const Lorenz63Params& params, double dt,
                              Index steps) {
  params.validate();
  require(dt > 0.0, ErrorKind::InvalidArgument, "dt must be positive");
  require(steps >= 1, ErrorKind::InvalidArgument, "steps must be >= 1");
  require(ic.allFinite(), ErrorKind::NonFinite, "initial condition not finite");

  Trajectory traj;
  traj.dt = dt;
  traj.system_tag = "lorenz63";
  traj.states.resize(steps + 1, 3);
  traj.states.row(0) = ic.transpose();

  Eigen::Vector3d x = ic;
  for (Index k = 1; k <= steps; ++k) {
    x = lorenz63_step(x, params, dt);
    check_bounded(x, "lorenz63", k);
    traj.states.row(k) = x.transpose();
  }
  return traj;
}

Vector KsGrid::nodes() const {
  Vector x(n_points);
  for (Index j = 0; j < n_points; ++j) x(j) = node(j);
  return x;
}

void KsGrid::validate() const {
  require(std::isfinite(x_min) && std::isfinite(x_max) && x_max > x_min,
          ErrorKind::InvalidArgument, "KS grid bounds must satisfy x_min < x_max");
  require(n_points >= 5, ErrorKind::InvalidArgument, "KS grid needs at least 5 nodes");
}

Vector ks_initial_condition(const KsGrid& grid) {
  grid.validate();
  const Vector x = grid.nodes();
  return x.unaryExpr([](double v) { return std::sin(v) * std::exp(-0.5 * (v - 10.0) * (v - 10.0)); });
}

Trajectory integrate_ks(const Vector& ic, const KsGrid& grid, double dt, Index steps,
                        Index substeps) {
  grid.validate();
  require(dt > 0.0, ErrorKind::InvalidArgument, "dt must be positive");
  require(steps >= 1, ErrorKind::InvalidArgument, "steps must be >= 1");
  require(substeps >= 1, ErrorKind::InvalidArgument, "substeps must be >= 1");
  require(ic.size() == grid.n_points, ErrorKind::DimensionMismatch,
          "KS initial condition length does not match grid");
  require(ic.allFinite(), ErrorKind::NonFinite, "initial condition not finite");

  const double h = dt / static_cast<double>(substeps);
  auto f = [&](const Vector& u) -> Vector { return ks_rhs(u, grid); };

  Trajectory traj;
  traj.dt = dt;
  traj.system_tag = "ks";
  traj.states.resize(steps + 1, grid.n_points);
  traj.states.row(0) = ic.transpose();

  Vector u = ic;
  Vector f_prev = f(u);
  // bootstrap: one RK4 step supplies u_1 for the two-step recurrence
  u = rk4_step(u, h, f);
  Index inner = 1;
  check_bounded(u, "ks", inner);
  for (Index k = 1; k <= steps; ++k) {
    for (; inner < k * substeps; ++inner) {
      const Vector f_curr = f(u);
      u += h * (1.5 * f_curr - 0.5 * f_prev);
      f_prev = f_curr;
      check_bounded(u, "ks", inner + 1);
    }
    traj.states.row(k) = u.transpose();
  }
  return traj;
}

Trajectory discard_transient(const Trajectory& traj, double t_cut) {
  traj.validate();
  // tolerate roundoff when t_cut lands on a node
  const double rel = (t_cut - traj.t0) / traj.dt;
  const Index first = rel <= 0.0 ? 0 : static_cast<Index>(std::ceil(rel - 1e-9));
  if (first >= traj.length())
    fail(ErrorKind::EmptyResult, "t_cut " + std::to_string(t_cut) + " is beyond the trajectory end");
  Trajectory out;
  out.states = traj.states.bottomRows(traj.length() - first);
  out.dt = traj.dt;
  out.t0 = traj.time_at(first);
  out.system_tag = traj.system_tag;
  return out;
}

}  // namespace jgf
