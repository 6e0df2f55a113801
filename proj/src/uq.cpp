#include "jgf/uq.hpp"

#include "jgf/io.hpp"

#include <cmath>

namespace jgf {

namespace {

void check_ensemble(const Ensemble& ens) {
  if (ens.size() < 2)
    fail(ErrorKind::DegenerateEnsemble, "ensemble metrics need k >= 2, got k=" + std::to_string(ens.size()));
  ens.validate();
}

}  // namespace

Vector ensemble_variance(const Ensemble& ens, EnsembleBlock at) {
  check_ensemble(ens);
  require(at == EnsembleBlock::Head || ens.n_out >= 2, ErrorKind::ShapeMismatch,
          "ensemble has no tail block");
  const Matrix x = at == EnsembleBlock::Head ? ens.heads() : ens.last_tail();
  const double wsum = ens.weights.sum();
  const Eigen::RowVectorXd mean = (ens.weights.transpose() * x) / wsum;
  const Matrix centered = x.rowwise() - mean;
  return (ens.weights.transpose() * centered.cwiseAbs2()).transpose() / wsum;
}

bool Autocorrelation::any_zero_variance() const {
  for (bool z : zero_variance)
    if (z) return true;
  return false;
}

Autocorrelation ensemble_autocorrelation(const Ensemble& ens) {
  check_ensemble(ens);
  require(ens.n_out >= 2, ErrorKind::ShapeMismatch, "autocorrelation needs a joint ensemble");
  const Matrix head = ens.heads();
  const Matrix tail = ens.last_tail();
  const double k = static_cast<double>(ens.size());
  const Matrix hc = head.rowwise() - head.colwise().mean();
  const Matrix tc = tail.rowwise() - tail.colwise().mean();
  const Eigen::ArrayXd cov = (hc.cwiseProduct(tc).colwise().sum() / k).transpose().array();
  const Eigen::ArrayXd sh = (hc.cwiseAbs2().colwise().sum() / k).transpose().array().sqrt();
  const Eigen::ArrayXd st = (tc.cwiseAbs2().colwise().sum() / k).transpose().array().sqrt();

  Autocorrelation out;
  out.ac.resize(ens.d);
  out.zero_variance.assign(static_cast<std::size_t>(ens.d), false);
  for (Index c = 0; c < ens.d; ++c) {
    const double denom = sh(c) * st(c);
    if (!(denom > 0.0)) {
      out.ac(c) = 0.0;
      out.zero_variance[static_cast<std::size_t>(c)] = true;
    } else {
      out.ac(c) = std::clamp(cov(c) / denom, -1.0, 1.0);
    }
  }
  return out;
}

double wasserstein_drift(const Ensemble& prev, const Ensemble& curr, const SinkhornConfig& cfg) {
  require(curr.n_out >= 2, ErrorKind::ShapeMismatch, "drift needs joint ensembles");
  require(prev.d == curr.d, ErrorKind::DimensionMismatch, "ensembles differ in dimension");
  return sinkhorn_w2(prev.heads(), curr.last_tail(), cfg).w2;
}

double signed_drift(double wd, const Vector& sig_next, const Vector& sig_curr) {
  require(wd >= 0.0, ErrorKind::InvalidArgument, "drift magnitude must be >= 0");
  return sig_next.mean() < sig_curr.mean() ? -wd : wd;
}

Vector wd_reconstruction(const Vector& wd_signed) {
  Vector out(wd_signed.size());
  double acc = 0.0;
  for (Index t = 0; t < wd_signed.size(); ++t) {
    acc += wd_signed(t);
    out(t) = acc;
  }
  return out;
}

Weighting parse_weighting(const std::string& name) {
  if (name == "uniform") return Weighting::Uniform;
  if (name == "inverse-distance" || name == "inverse_distance") return Weighting::InverseDistance;
  fail(ErrorKind::Config, "unknown weighting '" + name + "'");
}

const char* to_string(Weighting w) noexcept {
  return w == Weighting::Uniform ? "uniform" : "inverse-distance";
}

Ensemble reweight(const Ensemble& ens, const UqConfig& cfg) {
  Ensemble out = ens;
  if (cfg.weighting == Weighting::Uniform)
    out.weights = Vector::Ones(ens.size());
  else
    out.weights = (ens.distances.array() + cfg.inverse_distance_delta).inverse().matrix();
  return out;
}

UqSeries compute_uq_series(const Matrix& history, const std::vector<Ensemble>& ensembles,
                           const UqConfig& cfg) {
  const Index T = static_cast<Index>(ensembles.size());
  require(history.rows() >= 1, ErrorKind::ShapeMismatch, "UQ needs the observed history");
  UqSeries uq;
  if (T == 0) return uq;
  const Index d = ensembles.front().d;
  require(history.cols() == d, ErrorKind::DimensionMismatch, "history dimension mismatch");
  uq.sigma_ens.resize(T, d);
  uq.ac.resize(T, d);
  uq.wd.resize(T);
  uq.wd_signed.resize(T);

  for (Index t = 0; t < T; ++t) {
    const Ensemble ens = reweight(ensembles[static_cast<std::size_t>(t)], cfg);
    uq.sigma_ens.row(t) = ensemble_variance(ens, EnsembleBlock::Head).transpose();
    const Autocorrelation ac = ensemble_autocorrelation(ens);
    uq.ac.row(t) = ac.ac.transpose();
    if (ac.any_zero_variance()) ++uq.ac_zero_variance_steps;

    const Matrix prev_heads = t == 0 ? Matrix(history.bottomRows(1))
                                     : ensembles[static_cast<std::size_t>(t - 1)].heads();
    const SinkhornResult s = sinkhorn_w2(prev_heads, ens.last_tail(), cfg.sinkhorn);
    if (!s.converged) ++uq.sinkhorn_unconverged;
    uq.wd(t) = s.w2;
  }
  for (Index t = 0; t < T; ++t) {
    const Vector curr = uq.sigma_ens.row(t).transpose();
    const Vector next = t + 1 < T ? Vector(uq.sigma_ens.row(t + 1).transpose()) : curr;
    uq.wd_signed(t) = signed_drift(uq.wd(t), next, curr);
  }
  uq.wd_recon = wd_reconstruction(uq.wd_signed);
  return uq;
}

UqSeries compute_uq_series(const ForecastResult& result, const UqConfig& cfg) {
  return compute_uq_series(result.history, result.ensembles, cfg);
}

void write_uq_csv(const std::string& path, const UqSeries& uq, double t0, double dt,
                  bool per_component) {
  const Index T = uq.length();
  const Index d = uq.sigma_ens.cols();
  std::vector<std::string> header{"t", "sigma_mean", "ac_mean", "wd", "wd_signed", "wd_recon"};
  if (per_component) {
    for (Index c = 0; c < d; ++c) header.push_back("sigma_" + std::to_string(c));
    for (Index c = 0; c < d; ++c) header.push_back("ac_" + std::to_string(c));
  }
  Matrix rows(T, static_cast<Index>(header.size()));
  const Vector sm = uq.sigma_mean(), am = uq.ac_mean();
  for (Index t = 0; t < T; ++t) {
    rows(t, 0) = t0 + static_cast<double>(t) * dt;
    rows(t, 1) = sm(t);
    rows(t, 2) = am(t);
    rows(t, 3) = uq.wd(t);
    rows(t, 4) = uq.wd_signed(t);
    rows(t, 5) = uq.wd_recon(t);
    if (per_component) {
      rows.row(t).segment(6, d) = uq.sigma_ens.row(t);
      rows.row(t).segment(6 + d, d) = uq.ac.row(t);
    }
  }
  write_csv(path, header, rows);
}

}  // namespace jgf
