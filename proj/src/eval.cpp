#include "jgf/eval.hpp"

#include <algorithm>

namespace jgf {

MaeReport mae_curve(const std::vector<Trajectory>& forecasts, const std::vector<Trajectory>& references) {
  require(forecasts.size() == references.size(), ErrorKind::LengthMismatch,
          "forecast and reference lists differ in length");
  require(!forecasts.empty(), ErrorKind::LengthMismatch, "no trajectories to evaluate");
  const Index H = forecasts.front().length();
  const Index d = forecasts.front().dim();
  MaeReport rep;
  rep.per_component = Matrix::Zero(H, d);
  rep.n_ics = static_cast<Index>(forecasts.size());
  rep.dt = forecasts.front().dt;
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    const Trajectory& f = forecasts[i];
    const Trajectory& r = references[i];
    if (f.length() != H || r.length() != H || f.dim() != d || r.dim() != d)
      fail(ErrorKind::LengthMismatch, "trajectory pair " + std::to_string(i) + " has mismatched shape");
    rep.per_component += (f.states - r.states).cwiseAbs();
  }
  rep.per_component /= static_cast<double>(forecasts.size());
  rep.mean_curve = rep.per_component.rowwise().mean();
  return rep;
}

HistReport histogram_compare(const std::vector<LabeledSamples>& sources, Index bins,
                             double tail_fraction, bool aggregate,
                             const std::string& reference_label) {
  require(bins >= 2, ErrorKind::InvalidArgument, "histograms need at least 2 bins");
  require(tail_fraction >= 0.0 && tail_fraction <= 0.5, ErrorKind::InvalidArgument,
          "tail_fraction must lie in [0, 0.5]");
  require(!sources.empty(), ErrorKind::EmptySource, "no histogram sources");
  const Index d = sources.front().values.cols();
  for (const auto& s : sources) {
    if (s.values.size() == 0) fail(ErrorKind::EmptySource, "source '" + s.label + "' is empty");
    require(s.values.cols() == d, ErrorKind::DimensionMismatch, "sources differ in dimension");
  }

  HistReport rep;
  rep.aggregate = aggregate;
  const Index panels = aggregate ? 1 : d;
  auto panel_values = [&](const Matrix& m, Index p) -> Vector {
    if (aggregate) return Eigen::Map<const Vector>(m.data(), m.size());
    return m.col(p);
  };

  for (Index p = 0; p < panels; ++p) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& s : sources) {
      const Vector v = panel_values(s.values, p);
      lo = std::min(lo, v.minCoeff());
      hi = std::max(hi, v.maxCoeff());
    }
    if (hi <= lo) {
      lo -= 0.5;
      hi += 0.5;
    }
    HistPanel panel;
    panel.edges = Vector::LinSpaced(bins + 1, lo, hi);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (const auto& s : sources) {
      const Vector v = panel_values(s.values, p);
      Vector counts = Vector::Zero(bins);
      for (Index i = 0; i < v.size(); ++i) {
        auto b = static_cast<Index>((v(i) - lo) / width);
        counts(std::clamp<Index>(b, 0, bins - 1)) += 1.0;
      }
      panel.densities[s.label] = counts / static_cast<double>(v.size());
    }

    const auto ref = std::find_if(sources.begin(), sources.end(),
                                  [&](const LabeledSamples& s) { return s.label == reference_label; });
    double rlo = lo, rhi = hi;
    if (ref != sources.end()) {
      const Vector v = panel_values(ref->values, p);
      rlo = v.minCoeff();
      rhi = v.maxCoeff();
    }
    const double w = tail_fraction * (rhi - rlo);
    panel.tails = {rlo, rlo + w, rhi - w, rhi};
    rep.panels.push_back(std::move(panel));
  }
  return rep;
}

OlsFit ols_fit(const Vector& y, const Matrix& X) {
  const Index T = y.size();
  const Index p = X.cols();
  require(X.rows() == T, ErrorKind::LengthMismatch, "design and response differ in length");
  require(T > p + 1, ErrorKind::LengthMismatch,
          "ols_fit needs more than p+1 = " + std::to_string(p + 1) + " observations");
  Matrix A(T, p + 1);
  A.col(0).setOnes();
  A.rightCols(p) = X;

  OlsFit fit;
  Matrix gram = A.transpose() * A;
  const Vector rhs = A.transpose() * y;
  Eigen::ColPivHouseholderQR<Matrix> qr(A);
  if (qr.rank() < p + 1) {
    fit.ridge = true;
    gram.diagonal().array() += 1e-10;
  }
  Eigen::LDLT<Matrix> ldlt(gram);
  if (ldlt.info() != Eigen::Success) fail(ErrorKind::RankDeficient, "normal equations are singular");
  fit.coefficients = ldlt.solve(rhs);
  if (!fit.coefficients.allFinite())
    fail(ErrorKind::RankDeficient, "least-squares solution is not finite");
  fit.fitted = A * fit.coefficients;

  const double rss = (y - fit.fitted).squaredNorm();
  const double sigma2 = rss / static_cast<double>(T - p - 1);
  const Matrix inv = ldlt.solve(Matrix::Identity(p + 1, p + 1));
  fit.standard_errors = (sigma2 * inv.diagonal().array()).max(0.0).sqrt().matrix();
  return fit;
}

const char* to_string(CvScheme s) noexcept { return s == CvScheme::InSample ? "in_sample" : "split_half"; }

CvScheme parse_cv_scheme(const std::string& name) {
  if (name == "in_sample" || name == "in-sample") return CvScheme::InSample;
  if (name == "split_half" || name == "split-half") return CvScheme::SplitHalf;
  fail(ErrorKind::Config, "unknown regression scheme '" + name + "'");
}

Matrix uq_regressors(const UqSeries& uq) {
  Matrix X(uq.length(), 3);
  X.col(0) = uq.sigma_mean();
  X.col(1) = uq.ac_mean();
  X.col(2) = uq.wd_recon;
  return X;
}

namespace {

Matrix take_rows(const Matrix& m, Index parity) {
  Matrix out((m.rows() + 1 - parity) / 2, m.cols());
  for (Index i = parity, r = 0; i < m.rows(); i += 2, ++r) out.row(r) = m.row(i);
  return out;
}

Vector take_rows(const Vector& v, Index parity) {
  Vector out((v.size() + 1 - parity) / 2);
  for (Index i = parity, r = 0; i < v.size(); i += 2, ++r) out(r) = v(i);
  return out;
}

// rho between prediction and truth on the scheme's evaluation portion
double scored_fit(const Matrix& X, const Vector& y, CvScheme scheme, Vector* coefficients,
                  Index& degenerate) {
  Vector pred, truth;
  if (scheme == CvScheme::InSample) {
    const OlsFit fit = ols_fit(y, X);
    if (coefficients) *coefficients = fit.coefficients;
    pred = fit.fitted;
    truth = y;
  } else {
    const OlsFit fit = ols_fit(take_rows(y, 0), take_rows(X, 0));
    if (coefficients) *coefficients = fit.coefficients;
    const Matrix Xo = take_rows(X, 1);
    pred = (Xo * fit.coefficients.tail(X.cols())).array() + fit.coefficients(0);
    truth = take_rows(y, 1);
  }
  // a prediction that is constant up to rounding carries no signal
  const double spread = pred.size() ? pred.maxCoeff() - pred.minCoeff() : 0.0;
  if (!(spread > 1e-12 * (1.0 + pred.cwiseAbs().maxCoeff()))) {
    ++degenerate;
    return 0.0;
  }
  try {
    return pearson(pred, truth);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::ZeroVariance) throw;
    ++degenerate;
    return 0.0;
  }
}

}  // namespace

RegressionReport regress_on_regressors(const Matrix& regressors, const Vector& mae, CvScheme scheme) {
  require(regressors.rows() == mae.size(), ErrorKind::LengthMismatch,
          "regressors and MAE differ in length");
  RegressionReport rep;
  rep.cv_scheme = scheme;
  rep.rho_single.resize(regressors.cols());
  for (Index c = 0; c < regressors.cols(); ++c)
    rep.rho_single(c) = scored_fit(regressors.col(c), mae, scheme, nullptr, rep.degenerate);
  rep.rho_multiple = scored_fit(regressors, mae, scheme, &rep.coefficients, rep.degenerate);
  return rep;
}

RegressionReport uq_error_regression(const UqSeries& uq, const Vector& mae, CvScheme scheme) {
  return regress_on_regressors(uq_regressors(uq), mae, scheme);
}

std::vector<RegressionReport> ensemble_mean_regression(const std::vector<UqSeries>& runs,
                                                       const std::vector<Vector>& maes,
                                                       Index group_size, CvScheme scheme) {
  require(group_size >= 1, ErrorKind::GroupSizeMismatch, "group_size must be >= 1");
  require(runs.size() == maes.size(), ErrorKind::LengthMismatch, "UQ runs and MAE series differ in count");
  if (runs.size() % static_cast<std::size_t>(group_size) != 0)
    fail(ErrorKind::GroupSizeMismatch, std::to_string(runs.size()) + " runs do not split into groups of " +
                                           std::to_string(group_size));
  std::vector<RegressionReport> out;
  for (std::size_t g = 0; g < runs.size(); g += static_cast<std::size_t>(group_size)) {
    Matrix X = uq_regressors(runs[g]);
    Vector y = maes[g];
    for (std::size_t i = g + 1; i < g + static_cast<std::size_t>(group_size); ++i) {
      const Matrix Xi = uq_regressors(runs[i]);
      if (Xi.rows() != X.rows() || maes[i].size() != y.size())
        fail(ErrorKind::LengthMismatch, "runs within a group differ in length");
      X += Xi;
      y += maes[i];
    }
    X /= static_cast<double>(group_size);
    y /= static_cast<double>(group_size);
    out.push_back(regress_on_regressors(X, y, scheme));
  }
  return out;
}

Vector per_step_mae(const Trajectory& forecast, const Trajectory& reference) {
  require(forecast.length() == reference.length() && forecast.dim() == reference.dim(),
          ErrorKind::LengthMismatch, "forecast and reference differ in shape");
  return (forecast.states - reference.states).cwiseAbs().rowwise().mean();
}

double climatological_mae(const Matrix& states, Index pairs, Rng& rng) {
  require(states.rows() >= 2 && pairs >= 1, ErrorKind::InvalidArgument,
          "climatological MAE needs at least two states and one pair");
  std::uniform_int_distribution<Index> pick(0, states.rows() - 1);
  double acc = 0.0;
  for (Index i = 0; i < pairs; ++i) {
    const Index a = pick(rng), b = pick(rng);
    acc += (states.row(a) - states.row(b)).cwiseAbs().mean();
  }
  return acc / static_cast<double>(pairs);
}

}  // namespace jgf
