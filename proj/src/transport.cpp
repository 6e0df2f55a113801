#include "jgf/transport.hpp"

#include <limits>

namespace jgf {

void SinkhornConfig::validate() const {
  require(std::isfinite(epsilon), ErrorKind::InvalidArgument, "epsilon must be finite");
  require(epsilon > 0.0 || epsilon_scale > 0.0, ErrorKind::InvalidArgument,
          "epsilon or epsilon_scale must be positive");
  require(max_iters >= 1, ErrorKind::InvalidArgument, "max_iters must be >= 1");
  require(convergence_tol > 0.0, ErrorKind::InvalidArgument, "convergence_tol must be positive");
  require(overrelaxation >= 1.0 && overrelaxation < 2.0, ErrorKind::InvalidArgument,
          "overrelaxation must lie in [1, 2)");
}

Matrix squared_distance_matrix(const Matrix& A, const Matrix& B) {
  require(A.cols() == B.cols(), ErrorKind::DimensionMismatch, "point sets differ in dimension");
  Matrix C(A.rows(), B.rows());
  for (Index j = 0; j < B.rows(); ++j)
    C.col(j) = (A.rowwise() - B.row(j)).rowwise().squaredNorm();
  return C;
}

double median_of(const Matrix& values) {
  require(values.size() >= 1, ErrorKind::InvalidArgument, "median of empty set");
  std::vector<double> v(values.data(), values.data() + values.size());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double hi = v[mid];
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

namespace {

// Row-wise log-sum-exp of (offset_j - C_ij) / eps + log_w_j, times -eps.
Vector soft_min_rows(const Matrix& C, const Vector& offset, const Vector& log_w, double eps) {
  Eigen::ArrayXXd s = ((-C).rowwise() + offset.transpose()).array() / eps;
  s.rowwise() += log_w.transpose().array();
  const Eigen::ArrayXd mx = s.rowwise().maxCoeff();
  const Eigen::ArrayXd lse = mx + (s.colwise() - mx).exp().rowwise().sum().log();
  return (-eps * lse).matrix();
}

Vector soft_min_cols(const Matrix& C, const Vector& offset, const Vector& log_w, double eps) {
  Eigen::ArrayXXd s = ((-C).colwise() + offset).array() / eps;
  s.colwise() += log_w.array();
  const Eigen::ArrayXXd st = s.transpose();
  const Eigen::ArrayXd mx = st.rowwise().maxCoeff();
  const Eigen::ArrayXd lse = mx + (st.colwise() - mx).exp().rowwise().sum().log();
  return (-eps * lse).matrix();
}

// Scaling-form Sinkhorn on top of log potentials (f, g): the plan is
// u_i K_ij v_j with K_ij = a_i b_j exp((f_i + g_j - C_ij) / eps). Scalings are
// absorbed into the potentials whenever they drift far from 1, so K never
// over- or underflows in the region that carries mass.
struct StabilizedState {
  const Matrix& C;
  double log_a, log_b;
  Vector f, g;
  Eigen::ArrayXd u, v;
  Matrix K;

  void build(double eps) {
    K = ((((-C).colwise() + f).rowwise() + g.transpose()).array() / eps + (log_a + log_b)).exp().matrix();
    u.setOnes(C.rows());
    v.setOnes(C.cols());
  }
  void absorb(double eps) {
    f.array() += eps * u.log();
    g.array() += eps * v.log();
  }
  // Exact log-domain sweep; used for warm-up and whenever a kernel row or
  // column has lost all its mass.
  void log_sweep(double eps) {
    f = soft_min_rows(C, g, Vector::Constant(C.cols(), log_b), eps);
    g = soft_min_cols(C, f, Vector::Constant(C.rows(), log_a), eps);
  }
  bool scalings_extreme() const {
    constexpr double kLimit = 1e30;
    return u.maxCoeff() > kLimit || v.maxCoeff() > kLimit || u.minCoeff() < 1.0 / kLimit ||
           v.minCoeff() < 1.0 / kLimit;
  }
};

}  // namespace

SinkhornResult sinkhorn_w2(const Matrix& A, const Matrix& B, const SinkhornConfig& cfg) {
  cfg.validate();
  require(A.rows() >= 1 && B.rows() >= 1, ErrorKind::InvalidArgument, "point sets must be nonempty");
  require(A.allFinite() && B.allFinite(), ErrorKind::NonFinite, "point sets contain non-finite values");
  const Matrix C = squared_distance_matrix(A, B);
  const Index m = C.rows(), p = C.cols();
  const double c_max = C.maxCoeff();

  SinkhornResult res;
  if (c_max == 0.0) {
    res.converged = true;
    return res;
  }
  double eps = cfg.epsilon;
  if (eps <= 0.0) {
    double med = median_of(C);
    if (med <= 0.0) med = C.mean();
    eps = cfg.epsilon_scale * med;
  }
  eps = std::max(eps, 1e-12 * c_max);
  res.epsilon = eps;

  const double log_a = -std::log(static_cast<double>(m));
  const double log_b = -std::log(static_cast<double>(p));
  const double a = std::exp(log_a), b = std::exp(log_b);
  StabilizedState st{C, log_a, log_b, Vector::Zero(m), Vector::Zero(p), {}, {}, {}};

  // One scaling iteration; false when a kernel row/column carries no mass.
  // With `row_error` set, the row marginal is measured first and the
  // iteration stops there once it is below tolerance.
  enum class Step { Ok, Converged, Lost };
  auto scale_step = [&](double w, double* row_error) {
    const Eigen::ArrayXd Kv = (st.K * st.v.matrix()).array();
    if (!(Kv.minCoeff() > 0.0) || !Kv.allFinite()) return Step::Lost;
    if (row_error) {
      *row_error = (st.u * Kv - a).abs().sum();
      if (*row_error < cfg.convergence_tol) return Step::Converged;
    }
    const Eigen::ArrayXd u_new = a / Kv;
    st.u = w == 1.0 ? u_new : Eigen::ArrayXd(st.u.pow(1.0 - w) * u_new.pow(w));
    const Eigen::ArrayXd Ku = (st.K.transpose() * st.u.matrix()).array();
    if (!(Ku.minCoeff() > 0.0) || !Ku.allFinite()) return Step::Lost;
    const Eigen::ArrayXd v_new = b / Ku;
    st.v = w == 1.0 ? v_new : Eigen::ArrayXd(st.v.pow(1.0 - w) * v_new.pow(w));
    return Step::Ok;
  };
  auto recover = [&](double e) {
    st.log_sweep(e);
    st.build(e);
  };

  if (cfg.epsilon_scaling) {
    // coarse-to-fine warm start; a handful of sweeps per rung is enough
    st.log_sweep(c_max);
    for (double e = c_max; e > eps; e *= 0.5) {
      st.build(e);
      for (int it = 0; it < 10; ++it)
        if (scale_step(1.0, nullptr) == Step::Lost) recover(e);
      st.absorb(e);
    }
  }
  st.log_sweep(eps);
  st.build(eps);

  double err = std::numeric_limits<double>::infinity();
  for (Index it = 0; it < cfg.max_iters; ++it) {
    const Step step = scale_step(cfg.overrelaxation, &err);
    if (step == Step::Converged) break;
    res.iterations = it + 1;
    if (step == Step::Lost) {
      recover(eps);
    } else if (st.scalings_extreme()) {
      st.absorb(eps);
      st.build(eps);
    }
  }
  // marginal of the final plan
  const Eigen::ArrayXd rows = st.u * (st.K * st.v.matrix()).array();
  err = (rows - a).abs().sum();
  res.converged = err < cfg.convergence_tol;
  res.marginal_error = err;

  const Matrix plan = st.u.matrix().asDiagonal() * st.K * st.v.matrix().asDiagonal();
  res.cost = (plan.array() * C.array()).sum();
  if (!std::isfinite(res.cost)) fail(ErrorKind::NonFinite, "Sinkhorn transport cost is not finite");
  res.w2 = std::sqrt(std::max(res.cost, 0.0));
  return res;
}

}  // namespace jgf
