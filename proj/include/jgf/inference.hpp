// Forecasting from a joint sampler: nearest-tail sieving of point clouds
// with top-k ensemble retention, and latent-space refinement of the match.
#pragma once

#include "jgf/core.hpp"
#include "jgf/dynamics.hpp"
#include "jgf/ensemble.hpp"
#include "jgf/genmodel.hpp"
#include "jgf/point_cloud.hpp"
#include "jgf/random.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace jgf {

/// Observed states, most recent last, ending at time t_last.
struct History {
  Matrix states;
  double dt = 1.0;
  double t_last = 0.0;

  Index length() const { return states.rows(); }
  Index dim() const { return states.cols(); }
  /// The most recent `count` states flattened oldest first.
  Vector recent(Index count) const;
  /// Drops the oldest state and appends `next`.
  void advance(const Vector& next);
};

// ---------------------------------------------------------------------------
// Matching

struct Match {
  Index index = 0;
  double distance = 0.0;
};

/// Squared scaled distance between sample j's tail and `target` (flattened
/// tail-length history). Both matching paths use this exact evaluation.
double tail_sq_distance(const PointCloud& cloud, Index j, const Vector& target);

/// Argmin over samples of the tail mismatch; ties go to the lowest index.
Match match_best(const PointCloud& cloud, const History& history);

/// The k best samples sorted by (distance, index).
Ensemble top_k_match(const PointCloud& cloud, const History& history, Index k);

/// Exact top-k over a cloud sorted by its first scaled tail coordinate.
/// Returns the same members in the same order as the exhaustive scan.
class SortedProjectionIndex {
 public:
  explicit SortedProjectionIndex(const PointCloud& cloud);

  Ensemble top_k(const History& history, Index k) const;
  const PointCloud& cloud() const { return *cloud_; }

 private:
  const PointCloud* cloud_;
  std::vector<double> keys_;
  std::vector<Index> order_;
};

// ---------------------------------------------------------------------------
// Samplers

class JointSampler {
 public:
  virtual ~JointSampler() = default;
  /// Draws N joint samples; conditional samplers read `history`.
  virtual PointCloud draw(Index n_samples, const History& history, Rng& rng) const = 0;
  virtual bool conditional() const = 0;
  virtual Index history_length() const = 0;
};

class ModelSampler final : public JointSampler {
 public:
  explicit ModelSampler(const VaeModel& model) : model_(&model) {}

  PointCloud draw(Index n_samples, const History& history, Rng& rng) const override;
  bool conditional() const override { return model_->config.conditional(); }
  Index history_length() const override { return model_->config.history_length(); }
  const VaeModel& model() const { return *model_; }

 private:
  const VaeModel* model_;
};

/// Test oracle built from the true one-step map: every sample is a true
/// two-state segment whose tail is the last observed state plus Gaussian
/// noise and whose head is the exact successor plus Gaussian noise.
class OracleSampler final : public JointSampler {
 public:
  using StepMap = std::function<Vector(const Vector&)>;

  OracleSampler(StepMap step, double tail_noise, double head_noise)
      : step_(std::move(step)), tail_noise_(tail_noise), head_noise_(head_noise) {}

  PointCloud draw(Index n_samples, const History& history, Rng& rng) const override;
  bool conditional() const override { return true; }
  Index history_length() const override { return 1; }

 private:
  StepMap step_;
  double tail_noise_;
  double head_noise_;
};

// ---------------------------------------------------------------------------
// Forecasting

enum class ForecastMode { Sieve, Latent, SieveLatent };
const char* to_string(ForecastMode mode) noexcept;
ForecastMode parse_forecast_mode(const std::string& name);

struct SieveConfig {
  Index n_samples = 50000;
  Index k = 64;
  /// Redraw the cloud every step. Conditional samplers always redraw.
  bool resample = false;
  /// When > 0 and not resampling, redraw the cloud every this many steps.
  Index refresh_every = 0;
  /// Use SortedProjectionIndex instead of the exhaustive scan.
  bool use_index = false;
};

struct ForecastResult {
  Trajectory forecast;
  std::vector<Ensemble> ensembles;
  std::vector<double> match_distances;
  ForecastMode mode = ForecastMode::Sieve;
  bool resample = false;
  Index cloud_draws = 0;
  Matrix history;  // observed states the run started from
};

/// Autoregressive sieving: per step draw (or reuse) a cloud, keep the top-k
/// tail matches, emit the best head and shift it into the history.
ForecastResult forecast_sieve(const JointSampler& sampler, const History& history, Index horizon,
                              const SieveConfig& cfg, Rng& rng);
/// Same, reusing one fixed cloud for every step.
ForecastResult forecast_sieve(const PointCloud& cloud, const History& history, Index horizon,
                              const SieveConfig& cfg);

enum class LatentInit { EncodeHistory, BestSieved };
LatentInit parse_latent_init(const std::string& name);
const char* to_string(LatentInit init) noexcept;

struct LatentControlConfig {
  Index max_iters = 200;
  double step_size = 0.1;
  double tol = 1e-6;
  LatentInit init = LatentInit::EncodeHistory;

  void validate() const;
};

struct LatentControlResult {
  Vector z;
  double loss = 0.0;
  double initial_loss = 0.0;
  Index iterations = 0;
  Index accepted_steps = 0;
};

/// L(z) = || (tail(decode(z)) - target_tail) / scale ||, in physical units
/// scaled by the model's normalizer std (unconditional models).
double latent_tail_loss(const VaeModel& model, const Vector& z, const Vector& target_tail);
Vector latent_tail_gradient(const VaeModel& model, const Vector& z, const Vector& target_tail);

/// Gradient descent on L(z) with step halving on any increase; returns the
/// best iterate. `initial_loss`, when given, replaces L(z_init).
LatentControlResult latent_control_step(const VaeModel& model, const Vector& z_init,
                                        const Vector& target_tail, const LatentControlConfig& cfg,
                                        std::optional<double> initial_loss = std::nullopt);

/// Latent optimal control forecast for an unconditional model. With
/// BestSieved init the cloud/top-k settings come from `sieve`.
ForecastResult forecast_latent(const VaeModel& model, const History& history, Index horizon,
                               const LatentControlConfig& cfg, const SieveConfig& sieve, Rng& rng);

}  // namespace jgf
