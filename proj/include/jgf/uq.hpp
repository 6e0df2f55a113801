// Ground-truth-free uncertainty metrics computed from per-step ensembles:
// ensemble variance, head/tail autocorrelation, and Wasserstein drift
// between overlapping marginals with its signed cumulative reconstruction.
#pragma once

#include "jgf/core.hpp"
#include "jgf/ensemble.hpp"
#include "jgf/inference.hpp"
#include "jgf/transport.hpp"

#include <string>
#include <vector>

namespace jgf {

enum class EnsembleBlock { Head, Tail };

/// Weighted population variance per component (Hadamard square). Tail means
/// the state one step older than the head.
Vector ensemble_variance(const Ensemble& ens, EnsembleBlock at = EnsembleBlock::Head);

struct Autocorrelation {
  Vector ac;
  /// Components where either standard deviation vanished; AC reported as 0.
  std::vector<bool> zero_variance;
  bool any_zero_variance() const;
};

/// Unweighted per-component Pearson correlation between heads and tails.
Autocorrelation ensemble_autocorrelation(const Ensemble& ens);

/// W2 between the heads of one step's ensemble and the tails of the next.
double wasserstein_drift(const Ensemble& prev, const Ensemble& curr, const SinkhornConfig& cfg);

/// -wd when mean(sig_next) < mean(sig_curr), +wd otherwise.
double signed_drift(double wd, const Vector& sig_next, const Vector& sig_curr);

/// Prefix sums.
Vector wd_reconstruction(const Vector& wd_signed);

enum class Weighting { Uniform, InverseDistance };
Weighting parse_weighting(const std::string& name);
const char* to_string(Weighting w) noexcept;

struct UqConfig {
  SinkhornConfig sinkhorn;
  Weighting weighting = Weighting::Uniform;
  double inverse_distance_delta = 1e-8;
};

/// Returns `ens` with weights set per the weighting rule.
Ensemble reweight(const Ensemble& ens, const UqConfig& cfg);

struct UqSeries {
  Matrix sigma_ens;  // T x d
  Matrix ac;         // T x d
  Vector wd;
  Vector wd_signed;
  Vector wd_recon;
  Index ac_zero_variance_steps = 0;
  Index sinkhorn_unconverged = 0;

  Index length() const { return wd.size(); }
  Vector sigma_mean() const { return sigma_ens.rowwise().mean(); }
  Vector ac_mean() const { return ac.rowwise().mean(); }
};

/// Step 0 drifts against the last observed state as a point-mass marginal;
/// the last step takes the "otherwise" sign branch.
UqSeries compute_uq_series(const ForecastResult& result, const UqConfig& cfg = {});
UqSeries compute_uq_series(const Matrix& history, const std::vector<Ensemble>& ensembles,
                           const UqConfig& cfg = {});

/// CSV `t,sigma_mean,ac_mean,wd,wd_signed,wd_recon`, optionally followed by
/// sigma_c*/ac_c* columns.
void write_uq_csv(const std::string& path, const UqSeries& uq, double t0, double dt,
                  bool per_component = false);

}  // namespace jgf
