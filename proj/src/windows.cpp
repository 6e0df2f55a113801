#include "jgf/windows.hpp"

#include <cmath>

namespace jgf {

Matrix WindowSet::window(Index i) const { return unflatten_window(data.row(i).transpose(), n, d); }

void WindowSet::validate() const {
  require(n >= 1 && d >= 1, ErrorKind::ShapeMismatch, "window set has invalid n or d");
  require(data.cols() == n * d, ErrorKind::ShapeMismatch, "window data width must be n*d");
  require(static_cast<Index>(start_rows.size()) == data.rows() || start_rows.empty(),
          ErrorKind::ShapeMismatch, "start_rows length mismatch");
  require(data.allFinite(), ErrorKind::NonFinite, "window set contains non-finite entries");
}

Sampling parse_sampling(const std::string& name) {
  if (name == "uniform-random" || name == "uniform") return Sampling::UniformRandom;
  if (name == "all-contiguous" || name == "contiguous") return Sampling::AllContiguous;
  fail(ErrorKind::Config, "unknown sampling '" + name + "'");
}

const char* to_string(Sampling s) noexcept {
  return s == Sampling::UniformRandom ? "uniform-random" : "all-contiguous";
}

namespace {

// First row index whose time is >= t.
Index first_row_at_or_after(const Trajectory& traj, double t) {
  const double rel = (t - traj.t0) / traj.dt;
  if (rel <= 0.0) return 0;
  return static_cast<Index>(std::ceil(rel - 1e-9));
}

}  // namespace

WindowSet build_windows(const Trajectory& traj, Index n, Index count,
                        std::pair<double, double> range, Sampling sampling, Rng& rng) {
  traj.validate();
  require(n >= 1, ErrorKind::InvalidArgument, "window length must be >= 1");
  require(count >= 0, ErrorKind::InvalidArgument, "window count must be >= 0");
  const auto [t_a, t_b] = range;
  require(t_b > t_a, ErrorKind::InvalidArgument, "window range must satisfy t_a < t_b");

  const Index lo = std::min(first_row_at_or_after(traj, t_a), traj.length());
  const Index hi = std::min(first_row_at_or_after(traj, t_b), traj.length());
  const Index available = hi - lo - n + 1;
  if (available < 1)
    fail(ErrorKind::RangeTooShort, "range holds " + std::to_string(std::max<Index>(hi - lo, 0)) +
                                       " states, window length is " + std::to_string(n));

  WindowSet ws;
  ws.n = n;
  ws.d = traj.dim();
  ws.dt = traj.dt;
  ws.t_start = traj.time_at(lo);
  ws.t_end = t_b;

  if (sampling == Sampling::AllContiguous) {
    if (count > available)
      fail(ErrorKind::RangeTooShort, "requested " + std::to_string(count) +
                                         " contiguous windows, only " +
                                         std::to_string(available) + " available");
    const Index m = count > 0 ? count : available;
    ws.start_rows.resize(m);
    for (Index i = 0; i < m; ++i) ws.start_rows[i] = lo + i;
  } else {
    require(count >= 1, ErrorKind::InvalidArgument, "uniform sampling needs count >= 1");
    std::uniform_int_distribution<Index> pick(lo, lo + available - 1);
    ws.start_rows.resize(count);
    for (auto& r : ws.start_rows) r = pick(rng);
  }

  ws.data.resize(static_cast<Index>(ws.start_rows.size()), n * ws.d);
  for (Index i = 0; i < ws.data.rows(); ++i)
    ws.data.row(i) = flatten_window(traj.states.middleRows(ws.start_rows[i], n)).transpose();
  return ws;
}

Normalizer Normalizer::identity(Index d) {
  Normalizer nz;
  nz.mean = Vector::Zero(d);
  nz.std = Vector::Ones(d);
  nz.enabled = false;
  return nz;
}

Vector Normalizer::block_scale(Index blocks) const { return std.replicate(blocks, 1); }

Vector Normalizer::apply(const Vector& x) const {
  require(x.size() % dim() == 0, ErrorKind::ShapeMismatch, "normalizer: size not a multiple of d");
  const Index blocks = x.size() / dim();
  return (x - mean.replicate(blocks, 1)).cwiseQuotient(std.replicate(blocks, 1));
}

Vector Normalizer::invert(const Vector& x) const {
  require(x.size() % dim() == 0, ErrorKind::ShapeMismatch, "normalizer: size not a multiple of d");
  const Index blocks = x.size() / dim();
  return x.cwiseProduct(std.replicate(blocks, 1)) + mean.replicate(blocks, 1);
}

Matrix Normalizer::apply_rows(const Matrix& rows) const {
  require(rows.cols() % dim() == 0, ErrorKind::ShapeMismatch, "normalizer: width not a multiple of d");
  const Index blocks = rows.cols() / dim();
  const Eigen::RowVectorXd m = mean.replicate(blocks, 1).transpose();
  const Eigen::RowVectorXd s = std.replicate(blocks, 1).transpose();
  return (rows.rowwise() - m).array().rowwise() / s.array();
}

Matrix Normalizer::invert_rows(const Matrix& rows) const {
  require(rows.cols() % dim() == 0, ErrorKind::ShapeMismatch, "normalizer: width not a multiple of d");
  const Index blocks = rows.cols() / dim();
  const Eigen::RowVectorXd m = mean.replicate(blocks, 1).transpose();
  const Eigen::RowVectorXd s = std.replicate(blocks, 1).transpose();
  return (rows.array().rowwise() * s.array()).matrix().rowwise() + m;
}

Normalizer fit_normalizer(const WindowSet& ws) {
  ws.validate();
  require(ws.size() >= 2, ErrorKind::InvalidArgument, "fit_normalizer needs at least 2 windows");
  const Index d = ws.d;
  // pool every state of every window, component by component
  Vector sum = Vector::Zero(d);
  const double count = static_cast<double>(ws.size() * ws.n);
  for (Index b = 0; b < ws.n; ++b) sum += ws.data.middleCols(b * d, d).colwise().sum().transpose();
  const Vector mean = sum / count;
  Vector sq = Vector::Zero(d);
  for (Index b = 0; b < ws.n; ++b)
    sq += (ws.data.middleCols(b * d, d).rowwise() - mean.transpose())
              .array()
              .square()
              .colwise()
              .sum()
              .matrix()
              .transpose();

  Normalizer nz;
  nz.mean = mean;
  nz.std = (sq / count).cwiseSqrt().cwiseMax(Normalizer::kStdFloor);
  nz.enabled = true;
  return nz;
}

}  // namespace jgf
