// Joint sampler realized as a small variational autoencoder with MLP
// encoder/decoder and hand-written reverse-mode gradients.
//
// All network-facing functions (encode, decode, elbo_loss) work in the
// normalized coordinates of the model's Normalizer; sample_joint returns
// physical coordinates. Batches are column-major: one sample per column.
#pragma once

#include "jgf/core.hpp"
#include "jgf/point_cloud.hpp"
#include "jgf/random.hpp"
#include "jgf/windows.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace jgf {

/// UncondJoint (0->2): p(x_t, x_{t-dt}).
/// CondJoint (2->2): p(x_t, x_{t-dt} | x_{t-dt}, x_{t-2dt}).
/// BaselineCond (2->1): p(x_t | x_{t-dt}, x_{t-2dt}).
enum class ModelKind : std::uint8_t { UncondJoint = 0, CondJoint = 1, BaselineCond = 2 };

ModelKind parse_model_kind(const std::string& name);
const char* to_string(ModelKind kind) noexcept;

struct ModelConfig {
  ModelKind kind = ModelKind::UncondJoint;
  Index n = 2;
  Index d = 3;
  Index latent_dim = 4;
  std::vector<Index> hidden_dims{256, 256};
  double kl_weight = 1.0;

  Index cond_states() const { return kind == ModelKind::UncondJoint ? 0 : n; }
  Index out_states() const { return kind == ModelKind::BaselineCond ? 1 : n; }
  /// States per training window: the conditioning block plus the one new state.
  Index window_length() const { return kind == ModelKind::UncondJoint ? n : n + 1; }
  /// Observed states an autoregressive step needs.
  Index history_length() const { return std::max(n - 1, cond_states()); }
  Index cond_dim() const { return cond_states() * d; }
  Index out_dim() const { return out_states() * d; }
  bool conditional() const { return kind != ModelKind::UncondJoint; }
  bool joint() const { return kind != ModelKind::BaselineCond; }

  void validate() const;
};

struct TrainConfig {
  Index epochs = 500;
  Index batch_size = 500;
  double lr = 1e-4;
  double lr_decay_gamma = 0.999;
  std::uint64_t seed = 0;
  bool normalize = true;

  void validate() const;
};

/// One affine layer inside a flat parameter vector: W (out x in, column-major)
/// at `offset`, bias right after it.
struct DenseLayer {
  Index in = 0;
  Index out = 0;
  Index offset = 0;

  Index weight_size() const { return in * out; }
  Index bias_offset() const { return offset + weight_size(); }
  Index size() const { return weight_size() + out; }
};

/// ReLU on every layer but the last.
struct MlpLayout {
  std::vector<DenseLayer> layers;

  static MlpLayout build(Index input_dim, const std::vector<Index>& hidden, Index output_dim,
                         Index offset);
  Index input_dim() const { return layers.front().in; }
  Index output_dim() const { return layers.back().out; }
  Index begin() const { return layers.front().offset; }
  Index end() const { return layers.back().offset + layers.back().size(); }
};

/// Intermediate values kept for the backward pass.
struct MlpTape {
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre_activations;
};

Matrix mlp_forward(const MlpLayout& layout, const Vector& params, const Matrix& x,
                   MlpTape* tape = nullptr);
/// Accumulates parameter gradients into `grad` and returns d(loss)/d(input).
Matrix mlp_backward(const MlpLayout& layout, const Vector& params, const MlpTape& tape,
                    const Matrix& d_out, Vector& grad);

struct TrainingRecord {
  TrainConfig train_config;
  Index epochs_run = 0;
  double final_loss = 0.0;
  std::vector<double> epoch_losses;
};

struct VaeModel {
  ModelConfig config;
  Normalizer normalizer;
  MlpLayout encoder;
  MlpLayout decoder;
  Vector params;
  std::uint64_t rng_seed = 0;
  TrainingRecord record;

  Index parameter_count() const { return params.size(); }
  void validate() const;
};

inline constexpr double kLogVarMin = -30.0;
inline constexpr double kLogVarMax = 20.0;

/// Kaiming-uniform weights and fan-in-scaled biases from `seed`.
VaeModel init_model(const ModelConfig& config, const Normalizer& normalizer, std::uint64_t seed);

struct Posterior {
  Matrix mu;
  Matrix logvar;  // clamped to [kLogVarMin, kLogVarMax]
};

Posterior encode(const VaeModel& model, const Matrix& out, const Matrix& cond);
std::pair<Vector, Vector> encode(const VaeModel& model, const Vector& out, const Vector& cond);

Matrix reparameterize(const Matrix& mu, const Matrix& logvar, const Matrix& noise);
Vector reparameterize(const Vector& mu, const Vector& logvar, Rng& rng);

Matrix decode(const VaeModel& model, const Matrix& z, const Matrix& cond, MlpTape* tape = nullptr);
Vector decode(const VaeModel& model, const Vector& z, const Vector& cond);

/// Pulls d(loss)/d(decoder output) back to d(loss)/dz for a single latent.
Vector decoder_latent_gradient(const VaeModel& model, const Vector& z, const Vector& cond,
                               const Vector& d_out);

/// Normalized output/conditioning blocks, one sample per column.
struct Batch {
  Matrix out;
  Matrix cond;

  Index size() const { return out.cols(); }
};

Batch make_batch(const VaeModel& model, const WindowSet& ws, const std::vector<Index>& rows);

struct ElboResult {
  double loss = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
  Vector gradient;
};

/// Mean over the batch of ||x_hat - x||^2 + kl_weight * KL(q || N(0, I)),
/// with the reparameterization noise given explicitly (latent_dim x B).
ElboResult elbo_loss(const VaeModel& model, const Batch& batch, const Matrix& noise);
ElboResult elbo_loss(const VaeModel& model, const Batch& batch, Rng& rng);

using EpochCallback = std::function<void(Index epoch, double mean_loss, double lr)>;

/// Adam (beta1 0.9, beta2 0.999, eps 1e-8) with the learning rate multiplied
/// by lr_decay_gamma after each epoch. Deterministic given tc.seed.
VaeModel train(const WindowSet& windows, const ModelConfig& mc, const TrainConfig& tc,
               const EpochCallback& on_epoch = {});

/// N draws z ~ N(0, I) decoded to physical coordinates. `cond` holds the
/// conditioning states (physical, flattened oldest first) for conditional models.
PointCloud sample_joint(const VaeModel& model, Index n_samples, const std::optional<Vector>& cond,
                        Rng& rng);

}  // namespace jgf
