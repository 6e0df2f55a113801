// Evaluation protocols: lead-time MAE over initial-condition ensembles,
// shared-bin histogram comparison with tail windows, and linear regressions
// of forecast error on the uncertainty metrics.
#pragma once

#include "jgf/core.hpp"
#include "jgf/dynamics.hpp"
#include "jgf/uq.hpp"

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace jgf {

struct MaeReport {
  Matrix per_component;  // H x d
  Vector mean_curve;     // H
  Index n_ics = 0;
  double dt = 1.0;
};

/// MAE(t, c) averaged over the trajectory pairs.
MaeReport mae_curve(const std::vector<Trajectory>& forecasts, const std::vector<Trajectory>& references);

struct LabeledSamples {
  std::string label;
  Matrix values;  // T x d
};

struct TailWindow {
  double lower_lo = 0.0, lower_hi = 0.0;
  double upper_lo = 0.0, upper_hi = 0.0;
};

/// One histogram panel: a single component, or all values pooled.
struct HistPanel {
  Vector edges;  // bins + 1
  std::map<std::string, Vector> densities;  // relative frequencies per label
  TailWindow tails;
};

struct HistReport {
  std::vector<HistPanel> panels;
  bool aggregate = false;
};

/// Shared edges from the pooled min/max of all sources; tail windows cover
/// the outer `tail_fraction` of the reference source's range on each side.
/// `aggregate` pools every component into one panel.
HistReport histogram_compare(const std::vector<LabeledSamples>& sources, Index bins,
                             double tail_fraction, bool aggregate,
                             const std::string& reference_label = "reference");

template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar pearson(const Eigen::MatrixBase<DerivedX>& x,
                                  const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedX::Scalar;
  require(x.size() == y.size(), ErrorKind::LengthMismatch, "pearson: series differ in length");
  require(x.size() >= 2, ErrorKind::LengthMismatch, "pearson needs at least two points");
  const auto xc = (x.array() - x.mean()).eval();
  const auto yc = (y.array() - y.mean()).eval();
  const Scalar sxx = xc.square().sum();
  const Scalar syy = yc.square().sum();
  if (!(sxx > Scalar(0)) || !(syy > Scalar(0)))
    fail(ErrorKind::ZeroVariance, "pearson: a series has zero variance");
  return (xc * yc).sum() / std::sqrt(sxx * syy);
}

struct OlsFit {
  Vector coefficients;     // intercept first
  Vector fitted;
  Vector standard_errors;  // per coefficient
  bool ridge = false;      // rank-deficient design solved with the ridge fallback
};

/// Least squares with an intercept column via the normal equations; falls
/// back to a 1e-10 ridge when the augmented design is rank deficient.
OlsFit ols_fit(const Vector& y, const Matrix& X);

enum class CvScheme { InSample, SplitHalf };
const char* to_string(CvScheme s) noexcept;
CvScheme parse_cv_scheme(const std::string& name);

struct RegressionReport {
  Vector rho_single;     // sigma, AC, wd_recon
  double rho_multiple = 0.0;
  Vector coefficients;   // intercept + 3 (multiple regression)
  CvScheme cv_scheme = CvScheme::SplitHalf;
  /// Regressions whose prediction had zero variance; their rho is 0.
  Index degenerate = 0;
};

/// T x 3 design: mean sigma_ens, mean AC, wd_recon.
Matrix uq_regressors(const UqSeries& uq);

/// Three single-regressor fits and one multiple regression of MAE on the
/// UQ metrics. SplitHalf fits on even steps and scores on odd steps.
RegressionReport uq_error_regression(const UqSeries& uq, const Vector& mae, CvScheme scheme);
RegressionReport regress_on_regressors(const Matrix& regressors, const Vector& mae, CvScheme scheme);

/// Averages MAE and regressors over consecutive groups of `group_size` runs,
/// then regresses each group mean.
std::vector<RegressionReport> ensemble_mean_regression(const std::vector<UqSeries>& runs,
                                                       const std::vector<Vector>& maes,
                                                       Index group_size, CvScheme scheme);

/// Per-step MAE (mean over components) of one forecast against its reference.
Vector per_step_mae(const Trajectory& forecast, const Trajectory& reference);

/// Mean absolute difference between independently drawn states of `states`
/// (the climatological baseline), over `pairs` random pairs.
double climatological_mae(const Matrix& states, Index pairs, Rng& rng);

}  // namespace jgf
