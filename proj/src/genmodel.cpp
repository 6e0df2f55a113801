#include "jgf/genmodel.hpp"

#include <cmath>
#include <numeric>

namespace jgf {

namespace {

using ConstMatrixMap = Eigen::Map<const Matrix>;
using ConstVectorMap = Eigen::Map<const Vector>;

ConstMatrixMap weight(const DenseLayer& l, const Vector& params) {
  return ConstMatrixMap(params.data() + l.offset, l.out, l.in);
}

ConstVectorMap bias(const DenseLayer& l, const Vector& params) {
  return ConstVectorMap(params.data() + l.bias_offset(), l.out);
}

Matrix stack_rows(const Matrix& top, const Matrix& bottom) {
  if (bottom.rows() == 0) return top;
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

Matrix clamp_logvar(const Matrix& raw) {
  return raw.cwiseMax(kLogVarMin).cwiseMin(kLogVarMax);
}

void check_blocks(const VaeModel& model, const Matrix& out, const Matrix& cond) {
  const ModelConfig& c = model.config;
  require(out.rows() == c.out_dim(), ErrorKind::ShapeMismatch,
          "output block has " + std::to_string(out.rows()) + " rows, model expects " +
              std::to_string(c.out_dim()));
  require(cond.rows() == c.cond_dim(), ErrorKind::ShapeMismatch,
          "conditioning block has " + std::to_string(cond.rows()) + " rows, model expects " +
              std::to_string(c.cond_dim()));
  require(c.cond_dim() == 0 || cond.cols() == out.cols(), ErrorKind::ShapeMismatch,
          "conditioning and output batches differ in size");
}

Matrix as_column(const Vector& v) { return Eigen::Map<const Matrix>(v.data(), v.size(), 1); }

}  // namespace

ModelKind parse_model_kind(const std::string& name) {
  if (name == "uncond-joint" || name == "UncondJoint_0to2" || name == "uncond") return ModelKind::UncondJoint;
  if (name == "cond-joint" || name == "CondJoint_2to2" || name == "cond") return ModelKind::CondJoint;
  if (name == "baseline" || name == "BaselineCond_2to1") return ModelKind::BaselineCond;
  fail(ErrorKind::Config, "unknown model kind '" + name + "'");
}

const char* to_string(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::UncondJoint: return "uncond-joint";
    case ModelKind::CondJoint: return "cond-joint";
    case ModelKind::BaselineCond: return "baseline";
  }
  return "unknown";
}

void ModelConfig::validate() const {
  require(n >= 2, ErrorKind::Config, "model window length n must be >= 2");
  require(d >= 1, ErrorKind::Config, "state dimension d must be >= 1");
  require(latent_dim >= 1, ErrorKind::Config, "latent_dim must be >= 1");
  for (Index h : hidden_dims) require(h >= 1, ErrorKind::Config, "hidden dims must be >= 1");
  require(std::isfinite(kl_weight) && kl_weight >= 0.0, ErrorKind::Config, "kl_weight must be >= 0");
}

void TrainConfig::validate() const {
  require(epochs >= 0, ErrorKind::Config, "epochs must be >= 0");
  require(batch_size >= 1, ErrorKind::Config, "batch_size must be >= 1");
  require(lr > 0.0 && std::isfinite(lr), ErrorKind::Config, "lr must be positive");
  require(lr_decay_gamma > 0.0 && lr_decay_gamma <= 1.0, ErrorKind::Config,
          "lr_decay_gamma must lie in (0, 1]");
}

MlpLayout MlpLayout::build(Index input_dim, const std::vector<Index>& hidden, Index output_dim,
                           Index offset) {
  MlpLayout layout;
  Index in = input_dim;
  auto push = [&](Index out) {
    layout.layers.push_back(DenseLayer{in, out, offset});
    offset += in * out + out;
    in = out;
  };
  for (Index h : hidden) push(h);
  push(output_dim);
  return layout;
}

Matrix mlp_forward(const MlpLayout& layout, const Vector& params, const Matrix& x, MlpTape* tape) {
  require(x.rows() == layout.input_dim(), ErrorKind::ShapeMismatch, "MLP input has wrong size");
  if (tape) {
    tape->inputs.clear();
    tape->pre_activations.clear();
  }
  Matrix a = x;
  const std::size_t last = layout.layers.size() - 1;
  for (std::size_t i = 0; i < layout.layers.size(); ++i) {
    const DenseLayer& l = layout.layers[i];
    Matrix pre = weight(l, params) * a;
    pre.colwise() += bias(l, params);
    if (tape) tape->inputs.push_back(std::move(a));
    if (i == last) {
      a = pre;
    } else {
      a = pre.cwiseMax(0.0);
    }
    if (tape) tape->pre_activations.push_back(std::move(pre));
  }
  return a;
}

Matrix mlp_backward(const MlpLayout& layout, const Vector& params, const MlpTape& tape,
                    const Matrix& d_out, Vector& grad) {
  require(tape.inputs.size() == layout.layers.size(), ErrorKind::ShapeMismatch,
          "MLP tape does not match layout");
  Matrix delta = d_out;
  for (std::size_t ii = layout.layers.size(); ii-- > 0;) {
    const DenseLayer& l = layout.layers[ii];
    if (ii + 1 != layout.layers.size())
      delta = delta.cwiseProduct((tape.pre_activations[ii].array() > 0.0).cast<double>().matrix());
    Eigen::Map<Matrix>(grad.data() + l.offset, l.out, l.in).noalias() +=
        delta * tape.inputs[ii].transpose();
    Eigen::Map<Vector>(grad.data() + l.bias_offset(), l.out) += delta.rowwise().sum();
    delta = weight(l, params).transpose() * delta;
  }
  return delta;
}

void VaeModel::validate() const {
  config.validate();
  require(encoder.input_dim() == config.out_dim() + config.cond_dim(), ErrorKind::ShapeMismatch,
          "encoder input size inconsistent with config");
  require(encoder.output_dim() == 2 * config.latent_dim, ErrorKind::ShapeMismatch,
          "encoder must emit mean and log-variance");
  require(decoder.input_dim() == config.latent_dim + config.cond_dim(), ErrorKind::ShapeMismatch,
          "decoder input size inconsistent with config");
  require(decoder.output_dim() == config.out_dim(), ErrorKind::ShapeMismatch,
          "decoder output size inconsistent with config");
  require(encoder.end() == decoder.begin() && decoder.end() == params.size(),
          ErrorKind::ShapeMismatch, "parameter vector size inconsistent with layout");
  require(normalizer.dim() == config.d, ErrorKind::ShapeMismatch, "normalizer dimension mismatch");
  require(params.allFinite(), ErrorKind::NonFinite, "model parameters are not finite");
}

VaeModel init_model(const ModelConfig& config, const Normalizer& normalizer, std::uint64_t seed) {
  config.validate();
  VaeModel m;
  m.config = config;
  m.normalizer = normalizer;
  m.rng_seed = seed;
  m.encoder = MlpLayout::build(config.out_dim() + config.cond_dim(), config.hidden_dims,
                               2 * config.latent_dim, 0);
  m.decoder = MlpLayout::build(config.latent_dim + config.cond_dim(), config.hidden_dims,
                               config.out_dim(), m.encoder.end());
  m.params.resize(m.decoder.end());

  Rng rng(seed);
  for (const MlpLayout* layout : {&m.encoder, &m.decoder}) {
    for (const DenseLayer& l : layout->layers) {
      const double fan_in = static_cast<double>(l.in);
      std::uniform_real_distribution<double> w(-std::sqrt(6.0 / fan_in), std::sqrt(6.0 / fan_in));
      std::uniform_real_distribution<double> b(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
      for (Index i = 0; i < l.weight_size(); ++i) m.params(l.offset + i) = w(rng);
      for (Index i = 0; i < l.out; ++i) m.params(l.bias_offset() + i) = b(rng);
    }
  }
  if (normalizer.dim() != config.d) m.normalizer = Normalizer::identity(config.d);
  return m;
}

Posterior encode(const VaeModel& model, const Matrix& out, const Matrix& cond) {
  check_blocks(model, out, cond);
  const Matrix h = mlp_forward(model.encoder, model.params, stack_rows(out, cond));
  const Index L = model.config.latent_dim;
  Posterior p{h.topRows(L), clamp_logvar(h.bottomRows(L))};
  require(p.mu.allFinite() && p.logvar.allFinite(), ErrorKind::NonFinite, "encoder output not finite");
  return p;
}

std::pair<Vector, Vector> encode(const VaeModel& model, const Vector& out, const Vector& cond) {
  const Posterior p = encode(model, as_column(out), as_column(cond));
  return {p.mu.col(0), p.logvar.col(0)};
}

Matrix reparameterize(const Matrix& mu, const Matrix& logvar, const Matrix& noise) {
  require(mu.rows() == logvar.rows() && mu.cols() == logvar.cols() && noise.rows() == mu.rows() &&
              noise.cols() == mu.cols(),
          ErrorKind::ShapeMismatch, "reparameterize: shape mismatch");
  const Matrix sd = (0.5 * clamp_logvar(logvar).array()).exp().matrix();
  return mu + sd.cwiseProduct(noise);
}

Vector reparameterize(const Vector& mu, const Vector& logvar, Rng& rng) {
  const Matrix noise = standard_normal(mu.size(), 1, rng);
  return reparameterize(as_column(mu), as_column(logvar), noise).col(0);
}

Matrix decode(const VaeModel& model, const Matrix& z, const Matrix& cond, MlpTape* tape) {
  require(z.rows() == model.config.latent_dim, ErrorKind::ShapeMismatch, "latent has wrong size");
  require(cond.rows() == model.config.cond_dim(), ErrorKind::ShapeMismatch,
          "conditioning block has wrong size");
  require(cond.rows() == 0 || cond.cols() == z.cols(), ErrorKind::ShapeMismatch,
          "conditioning and latent batches differ in size");
  return mlp_forward(model.decoder, model.params, stack_rows(z, cond), tape);
}

Vector decode(const VaeModel& model, const Vector& z, const Vector& cond) {
  return decode(model, as_column(z), as_column(cond)).col(0);
}

Vector decoder_latent_gradient(const VaeModel& model, const Vector& z, const Vector& cond,
                               const Vector& d_out) {
  MlpTape tape;
  decode(model, as_column(z), as_column(cond), &tape);
  Vector scratch = Vector::Zero(model.params.size());
  const Matrix d_in = mlp_backward(model.decoder, model.params, tape, as_column(d_out), scratch);
  return d_in.col(0).head(model.config.latent_dim);
}

Batch make_batch(const VaeModel& model, const WindowSet& ws, const std::vector<Index>& rows) {
  const ModelConfig& c = model.config;
  require(ws.n == c.window_length() && ws.d == c.d, ErrorKind::ShapeMismatch,
          "windows have n=" + std::to_string(ws.n) + ", d=" + std::to_string(ws.d) + "; " +
              to_string(c.kind) + " model needs n=" + std::to_string(c.window_length()) +
              ", d=" + std::to_string(c.d));
  Batch b;
  b.out.resize(c.out_dim(), static_cast<Index>(rows.size()));
  b.cond.resize(c.cond_dim(), c.cond_dim() > 0 ? static_cast<Index>(rows.size()) : 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Vector w = model.normalizer.apply(ws.data.row(rows[i]).transpose());
    b.out.col(static_cast<Index>(i)) = w.tail(c.out_dim());
    if (c.cond_dim() > 0) b.cond.col(static_cast<Index>(i)) = w.head(c.cond_dim());
  }
  return b;
}

ElboResult elbo_loss(const VaeModel& model, const Batch& batch, const Matrix& noise) {
  check_blocks(model, batch.out, batch.cond);
  const Index B = batch.size();
  const Index L = model.config.latent_dim;
  require(B >= 1, ErrorKind::InvalidArgument, "elbo_loss needs a nonempty batch");
  require(noise.rows() == L && noise.cols() == B, ErrorKind::ShapeMismatch,
          "noise must be latent_dim x batch");
  const double inv_b = 1.0 / static_cast<double>(B);
  const double w = model.config.kl_weight;

  MlpTape enc_tape, dec_tape;
  const Matrix h = mlp_forward(model.encoder, model.params, stack_rows(batch.out, batch.cond), &enc_tape);
  const Matrix mu = h.topRows(L);
  const Matrix raw_lv = h.bottomRows(L);
  const Matrix lv = clamp_logvar(raw_lv);
  const Matrix sd = (0.5 * lv.array()).exp().matrix();
  const Matrix z = mu + sd.cwiseProduct(noise);
  const Matrix x_hat = decode(model, z, batch.cond, &dec_tape);

  const Matrix resid = x_hat - batch.out;
  ElboResult r;
  r.reconstruction = resid.squaredNorm() * inv_b;
  r.kl = 0.5 * (mu.array().square() + lv.array().exp() - 1.0 - lv.array()).sum() * inv_b;
  r.loss = r.reconstruction + w * r.kl;
  if (!std::isfinite(r.loss)) fail(ErrorKind::NonFinite, "ELBO loss is not finite");

  r.gradient = Vector::Zero(model.params.size());
  const Matrix d_dec_in = mlp_backward(model.decoder, model.params, dec_tape, 2.0 * inv_b * resid, r.gradient);
  const Matrix dz = d_dec_in.topRows(L);

  const Matrix d_mu = dz + (w * inv_b) * mu;
  Matrix d_lv = (dz.array() * noise.array() * 0.5 * sd.array()).matrix() +
                ((0.5 * w * inv_b) * (lv.array().exp() - 1.0)).matrix();
  // clamped entries pass no gradient
  d_lv = d_lv.cwiseProduct(
      ((raw_lv.array() >= kLogVarMin) && (raw_lv.array() <= kLogVarMax)).cast<double>().matrix());
  mlp_backward(model.encoder, model.params, enc_tape, stack_rows(d_mu, d_lv), r.gradient);
  if (!r.gradient.allFinite()) fail(ErrorKind::NonFinite, "ELBO gradient is not finite");
  return r;
}

ElboResult elbo_loss(const VaeModel& model, const Batch& batch, Rng& rng) {
  return elbo_loss(model, batch, standard_normal(model.config.latent_dim, batch.size(), rng));
}

VaeModel train(const WindowSet& windows, const ModelConfig& mc, const TrainConfig& tc,
               const EpochCallback& on_epoch) {
  mc.validate();
  tc.validate();
  windows.validate();
  require(windows.n == mc.window_length() && windows.d == mc.d, ErrorKind::ShapeMismatch,
          "windows have n=" + std::to_string(windows.n) + ", d=" + std::to_string(windows.d) +
              "; " + to_string(mc.kind) + " model needs n=" + std::to_string(mc.window_length()) +
              ", d=" + std::to_string(mc.d));
  require(windows.size() >= 1, ErrorKind::InvalidArgument, "no training windows");

  const Normalizer nz = tc.normalize && windows.size() >= 2 ? fit_normalizer(windows)
                                                            : Normalizer::identity(mc.d);
  VaeModel model = init_model(mc, nz, derive_seed(tc.seed, "init"));
  model.record.train_config = tc;
  Rng shuffle_rng(derive_seed(tc.seed, "shuffle"));
  Rng noise_rng(derive_seed(tc.seed, "noise"));

  const Index M = windows.size();
  std::vector<Index> all(static_cast<std::size_t>(M));
  std::iota(all.begin(), all.end(), Index{0});
  const Batch full = make_batch(model, windows, all);

  const Index P = model.params.size();
  Vector m1 = Vector::Zero(P), m2 = Vector::Zero(P);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double b1t = 1.0, b2t = 1.0;
  double lr = tc.lr;
  Index step = 0;

  std::vector<Index> perm = all;
  Batch batch;
  for (Index epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (Index start = 0; start < M; start += tc.batch_size) {
      const Index B = std::min(tc.batch_size, M - start);
      batch.out.resize(full.out.rows(), B);
      batch.cond.resize(full.cond.rows(), full.cond.rows() > 0 ? B : 0);
      for (Index i = 0; i < B; ++i) {
        const Index src = perm[static_cast<std::size_t>(start + i)];
        batch.out.col(i) = full.out.col(src);
        if (full.cond.rows() > 0) batch.cond.col(i) = full.cond.col(src);
      }
      ElboResult r;
      try {
        r = elbo_loss(model, batch, noise_rng);
      } catch (const Error& e) {
        fail(e.kind(), std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step) + ")");
      }
      ++step;
      b1t *= beta1;
      b2t *= beta2;
      m1 = beta1 * m1 + (1.0 - beta1) * r.gradient;
      m2 = beta2 * m2 + (1.0 - beta2) * r.gradient.cwiseAbs2();
      const double step_size = lr / (1.0 - b1t);
      const double corr2 = 1.0 / (1.0 - b2t);
      model.params.array() -= step_size * m1.array() / ((m2.array() * corr2).sqrt() + eps);
      epoch_loss += r.loss * static_cast<double>(B);
    }
    epoch_loss /= static_cast<double>(M);
    if (!model.params.allFinite())
      fail(ErrorKind::NonFinite, "parameters diverged in epoch " + std::to_string(epoch));
    model.record.epoch_losses.push_back(epoch_loss);
    model.record.final_loss = epoch_loss;
    model.record.epochs_run = epoch + 1;
    if (on_epoch) on_epoch(epoch, epoch_loss, lr);
    lr *= tc.lr_decay_gamma;
  }
  return model;
}

PointCloud sample_joint(const VaeModel& model, Index n_samples, const std::optional<Vector>& cond,
                        Rng& rng) {
  const ModelConfig& c = model.config;
  require(n_samples >= 0, ErrorKind::InvalidArgument, "sample count must be >= 0");
  if (c.conditional() && !cond)
    fail(ErrorKind::CondMissing, std::string(to_string(c.kind)) + " model needs conditioning states");
  if (!c.conditional() && cond)
    fail(ErrorKind::CondUnexpected, "unconditional model takes no conditioning states");

  PointCloud cloud;
  cloud.n_out = c.out_states();
  cloud.d = c.d;
  cloud.origin = PointCloud::Origin::Model;
  cloud.scale = model.normalizer.std;
  cloud.latents = standard_normal(c.latent_dim, n_samples, rng);
  cloud.samples.resize(n_samples, c.out_dim());

  Vector cond_n;
  if (cond) {
    require(cond->size() == c.cond_dim(), ErrorKind::ShapeMismatch, "conditioning block has wrong size");
    cond_n = model.normalizer.apply(*cond);
  }
  constexpr Index kChunk = 4096;
  for (Index start = 0; start < n_samples; start += kChunk) {
    const Index B = std::min(kChunk, n_samples - start);
    const Matrix cond_block = c.cond_dim() > 0 ? Matrix(cond_n.replicate(1, B)) : Matrix(0, 0);
    const Matrix x = decode(model, cloud.latents.middleCols(start, B), cond_block);
    cloud.samples.middleRows(start, B) = model.normalizer.invert_rows(x.transpose());
  }
  require(cloud.samples.allFinite(), ErrorKind::NonFinite, "decoded samples are not finite");
  return cloud;
}

}  // namespace jgf
