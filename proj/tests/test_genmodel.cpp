#include "jgf/genmodel.hpp"
#include "jgf/inference.hpp"

#include <doctest.h>

#include <cmath>

using namespace jgf;

namespace {

ModelConfig tiny_config(ModelKind kind, Index latent = 3, std::vector<Index> hidden = {8, 5}) {
  ModelConfig mc;
  mc.kind = kind;
  mc.n = 2;
  mc.d = 3;
  mc.latent_dim = latent;
  mc.hidden_dims = std::move(hidden);
  mc.kl_weight = 0.7;
  return mc;
}

Normalizer random_normalizer(Index d, Rng& rng) {
  Normalizer nz;
  std::uniform_real_distribution<double> u(0.5, 2.0);
  nz.mean = standard_normal(d, 1, rng);
  nz.std.resize(d);
  for (Index c = 0; c < d; ++c) nz.std(c) = u(rng);
  return nz;
}

Batch random_batch(const ModelConfig& mc, Index B, Rng& rng) {
  Batch b;
  b.out = standard_normal(mc.out_dim(), B, rng);
  b.cond = mc.cond_dim() > 0 ? standard_normal(mc.cond_dim(), B, rng) : Matrix(0, B);
  return b;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-7}); }

// Weight block of layer l as a standalone matrix (column-major out x in).
Matrix weight(const VaeModel& m, const DenseLayer& l) {
  return Eigen::Map<const Matrix>(m.params.data() + l.offset, l.out, l.in);
}

Vector bias(const VaeModel& m, const DenseLayer& l) { return m.params.segment(l.bias_offset(), l.out); }

WindowSet lorenz_windows(Index count, std::uint64_t seed) {
  const Trajectory t = integrate_lorenz63(Eigen::Vector3d(1, 1, 1), Lorenz63Params{}, 0.025, 6000);
  Rng rng(seed);
  return build_windows(t, 2, count, {5.0, 150.0}, Sampling::UniformRandom, rng);
}

}  // namespace

TEST_CASE("model configurations") {
  const ModelConfig u = tiny_config(ModelKind::UncondJoint);
  const ModelConfig c = tiny_config(ModelKind::CondJoint);
  const ModelConfig b = tiny_config(ModelKind::BaselineCond);
  CHECK(u.cond_states() == 0);
  CHECK(c.cond_states() == 2);
  CHECK(b.cond_states() == 2);
  CHECK(u.out_dim() == 6);
  CHECK(c.out_dim() == 6);
  CHECK(b.out_dim() == 3);
  Rng rng(1);
  const VaeModel mc = init_model(c, Normalizer::identity(3), 5);
  CHECK(mc.encoder.input_dim() == 12);
  CHECK(mc.encoder.output_dim() == 2 * c.latent_dim);
  CHECK(mc.decoder.input_dim() == c.latent_dim + 6);
  CHECK(mc.decoder.output_dim() == 6);
  CHECK(parse_model_kind("cond-joint") == ModelKind::CondJoint);
  CHECK_THROWS_AS(parse_model_kind("transformer"), Error);
}

TEST_CASE("zero weights encode and decode to zero") {
  for (ModelKind kind : {ModelKind::UncondJoint, ModelKind::CondJoint, ModelKind::BaselineCond}) {
    const ModelConfig mc = tiny_config(kind);
    VaeModel m = init_model(mc, Normalizer::identity(3), 1);
    m.params.setZero();
    Rng rng(2);
    const Batch b = random_batch(mc, 4, rng);
    const Posterior q = encode(m, b.out, b.cond);
    CHECK(q.mu.cwiseAbs().maxCoeff() == 0.0);
    CHECK(q.logvar.cwiseAbs().maxCoeff() == 0.0);
    const Matrix x = decode(m, standard_normal(mc.latent_dim, 4, rng), b.cond);
    CHECK(x.rows() == mc.out_dim());
    CHECK(x.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("single-layer networks equal explicit matrix products") {
  const ModelConfig mc = tiny_config(ModelKind::CondJoint, 3, {});
  const VaeModel m = init_model(mc, Normalizer::identity(3), 9);
  REQUIRE(m.encoder.layers.size() == 1);
  Rng rng(3);
  const Batch b = random_batch(mc, 5, rng);
  Matrix input(12, 5);
  input << b.out, b.cond;
  const DenseLayer& e = m.encoder.layers[0];
  const Matrix enc = (weight(m, e) * input).colwise() + bias(m, e);
  const Posterior q = encode(m, b.out, b.cond);
  CHECK((q.mu - enc.topRows(3)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((q.logvar - enc.bottomRows(3)).cwiseAbs().maxCoeff() < 1e-14);

  const Matrix z = standard_normal(3, 5, rng);
  Matrix dec_in(9, 5);
  dec_in << z, b.cond;
  const DenseLayer& dl = m.decoder.layers[0];
  const Matrix dec = (weight(m, dl) * dec_in).colwise() + bias(m, dl);
  CHECK((decode(m, z, b.cond) - dec).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("encode rejects wrong shapes") {
  const ModelConfig mc = tiny_config(ModelKind::UncondJoint);
  const VaeModel m = init_model(mc, Normalizer::identity(3), 1);
  CHECK_THROWS_AS(encode(m, Matrix(Matrix::Zero(5, 2)), Matrix(0, 2)), Error);
  CHECK_THROWS_AS(encode(m, Matrix(Matrix::Zero(6, 2)), Matrix(Matrix::Zero(6, 2))), Error);
}

TEST_CASE("reparameterize") {
  Rng a(5), b(5);
  const Vector mu = (Vector(3) << 1.0, -2.0, 0.5).finished();
  const Vector lv = (Vector(3) << 0.0, 1.0, -1.0).finished();
  CHECK(reparameterize(mu, lv, a) == reparameterize(mu, lv, b));
  Rng c(6);
  const Vector tight = reparameterize(mu, Vector::Constant(3, kLogVarMin), c);
  CHECK((tight - mu).cwiseAbs().maxCoeff() < 1e-5);

  const Index n = 100000;
  Rng d(7);
  const Matrix mus = mu.replicate(1, n);
  const Matrix lvs = lv.replicate(1, n);
  const Matrix z = reparameterize(mus, lvs, standard_normal(3, n, d));
  const Vector mean = z.rowwise().mean();
  for (Index i = 0; i < 3; ++i) {
    const double sigma = std::exp(0.5 * lv(i));
    CHECK(std::abs(mean(i) - mu(i)) < 4.0 * sigma / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("perfect autoencoder has zero loss") {
  const ModelConfig mc = tiny_config(ModelKind::UncondJoint, 2, {4});
  VaeModel m = init_model(mc, Normalizer::identity(3), 1);
  m.params.setZero();
  const Vector x = (Vector(6) << 0.3, -1, 2, 0.1, 0.2, -0.5).finished();
  m.params.segment(m.decoder.layers.back().bias_offset(), 6) = x;
  Batch b;
  b.out = x.replicate(1, 4);
  b.cond = Matrix(0, 4);
  Rng rng(1);
  const ElboResult r = elbo_loss(m, b, rng);
  CHECK(r.loss == 0.0);
  CHECK(r.kl == 0.0);
  CHECK(r.reconstruction == 0.0);
}

TEST_CASE("KL term for a fixed posterior mean") {
  const ModelConfig mc = tiny_config(ModelKind::UncondJoint, 3, {4});
  VaeModel m = init_model(mc, Normalizer::identity(3), 1);
  m.params.setZero();
  const Vector mean = (Vector(3) << 1.0, -2.0, 0.5).finished();
  m.params.segment(m.encoder.layers.back().bias_offset(), 3) = mean;
  Rng rng(2);
  const Batch b = random_batch(mc, 3, rng);
  const ElboResult r = elbo_loss(m, b, rng);
  CHECK(r.kl == doctest::Approx(0.5 * mean.squaredNorm()).epsilon(1e-14));
  CHECK(r.loss == doctest::Approx(r.reconstruction + mc.kl_weight * r.kl).epsilon(1e-14));
}

TEST_CASE("ELBO gradients match central finite differences") {
  const double h = 1e-5;
  Index checked = 0;
  double worst = 0.0;
  for (ModelKind kind : {ModelKind::UncondJoint, ModelKind::CondJoint, ModelKind::BaselineCond}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(1000 + seed);
      const ModelConfig mc = tiny_config(kind, 2 + static_cast<Index>(seed % 3), {8, 6});
      VaeModel m = init_model(mc, random_normalizer(3, rng), seed);
      const Index B = 1 + static_cast<Index>(seed % 4);
      const Batch b = random_batch(mc, B, rng);
      const Matrix noise = standard_normal(mc.latent_dim, B, rng);
      const ElboResult r = elbo_loss(m, b, noise);
      REQUIRE(r.gradient.size() == m.params.size());
      for (Index p = 0; p < m.params.size(); ++p) {
        const double keep = m.params(p);
        m.params(p) = keep + h;
        const double up = elbo_loss(m, b, noise).loss;
        m.params(p) = keep - h;
        const double down = elbo_loss(m, b, noise).loss;
        m.params(p) = keep;
        const double fd = (up - down) / (2 * h);
        const double e = rel_err(r.gradient(p), fd);
        worst = std::max(worst, e);
        if (e >= 1e-4) {
          CAPTURE(seed);
          CAPTURE(p);
          CHECK(r.gradient(p) == doctest::Approx(fd));
        }
        ++checked;
      }
    }
  }
  MESSAGE("checked " << checked << " parameters, worst relative error " << worst);
  CHECK(worst < 1e-4);
}

TEST_CASE("decoder latent gradient matches finite differences") {
  const double h = 1e-5;
  double worst = 0.0;
  for (ModelKind kind : {ModelKind::UncondJoint, ModelKind::CondJoint}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(77 + seed);
      const ModelConfig mc = tiny_config(kind, 3, {8, 8});
      const VaeModel m = init_model(mc, random_normalizer(3, rng), seed);
      const Vector target = standard_normal(mc.out_dim(), 1, rng);
      const Vector cond = standard_normal(mc.cond_dim(), 1, rng);
      const Vector z = standard_normal(3, 1, rng);
      const auto loss = [&](const Vector& zz) { return 0.5 * (decode(m, zz, cond) - target).squaredNorm(); };
      const Vector g = decoder_latent_gradient(m, z, cond, decode(m, z, cond) - target);
      for (Index i = 0; i < 3; ++i) {
        Vector zp = z, zm = z;
        zp(i) += h;
        zm(i) -= h;
        worst = std::max(worst, rel_err(g(i), (loss(zp) - loss(zm)) / (2 * h)));
      }
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("sample_joint contracts") {
  const ModelConfig u = tiny_config(ModelKind::UncondJoint);
  const VaeModel mu = init_model(u, Normalizer::identity(3), 3);
  Rng rng(4);
  const PointCloud empty = sample_joint(mu, 0, std::nullopt, rng);
  CHECK(empty.size() == 0);
  CHECK(sample_joint(mu, 7, std::nullopt, rng).samples.cols() == 6);
  try {
    sample_joint(mu, 3, Vector::Zero(6), rng);
    FAIL("expected CondUnexpected");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CondUnexpected);
  }
  const VaeModel mb = init_model(tiny_config(ModelKind::BaselineCond), Normalizer::identity(3), 3);
  try {
    sample_joint(mb, 3, std::nullopt, rng);
    FAIL("expected CondMissing");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CondMissing);
  }
  const PointCloud base = sample_joint(mb, 5, Vector::Zero(6), rng);
  CHECK(base.samples.cols() == 3);
  CHECK(base.n_out == 1);
}

TEST_CASE("identity decoder reproduces the latent draws") {
  ModelConfig mc = tiny_config(ModelKind::UncondJoint, 6, {});
  VaeModel m = init_model(mc, Normalizer::identity(3), 1);
  m.params.setZero();
  const DenseLayer& dl = m.decoder.layers[0];
  Eigen::Map<Matrix>(m.params.data() + dl.offset, 6, 6).setIdentity();
  Rng a(12), b(12);
  const PointCloud cloud = sample_joint(m, 50, std::nullopt, a);
  const Matrix z = standard_normal(6, 50, b);
  CHECK((cloud.samples - z.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(cloud.latents == z);
}

TEST_CASE("sampling de-normalizes into physical units") {
  ModelConfig mc = tiny_config(ModelKind::UncondJoint, 6, {});
  Normalizer nz;
  nz.mean = (Vector(3) << 1, 2, 3).finished();
  nz.std = (Vector(3) << 10, 20, 30).finished();
  VaeModel m = init_model(mc, nz, 1);
  m.params.setZero();
  Rng rng(1);
  const PointCloud cloud = sample_joint(m, 3, std::nullopt, rng);
  for (Index j = 0; j < 3; ++j) CHECK(cloud.samples.row(j) == (Eigen::RowVectorXd(6) << 1, 2, 3, 1, 2, 3).finished());
}

TEST_CASE("training: zero epochs, determinism and progress") {
  const WindowSet ws = lorenz_windows(2000, 1);
  const WindowSet held = lorenz_windows(500, 2);
  ModelConfig mc = tiny_config(ModelKind::UncondJoint, 3, {32, 32});
  mc.kl_weight = 0.05;
  TrainConfig tc;
  tc.epochs = 0;
  tc.batch_size = 100;
  tc.lr = 2e-3;
  tc.seed = 17;
  const VaeModel untrained = train(ws, mc, tc);
  const VaeModel init = init_model(mc, untrained.normalizer, derive_seed(17, "init"));
  CHECK(untrained.params == init.params);

  tc.epochs = 15;
  const VaeModel a = train(ws, mc, tc);
  const VaeModel b = train(ws, mc, tc);
  CHECK(a.params == b.params);
  CHECK(a.record.epoch_losses == b.record.epoch_losses);
  CHECK(a.record.epochs_run == 15);

  std::vector<Index> rows(static_cast<std::size_t>(held.size()));
  for (Index i = 0; i < held.size(); ++i) rows[static_cast<std::size_t>(i)] = i;
  const Matrix noise = [&] {
    Rng rng(99);
    return standard_normal(mc.latent_dim, held.size(), rng);
  }();
  const double before = elbo_loss(untrained, make_batch(untrained, held, rows), noise).loss;
  const double after = elbo_loss(a, make_batch(a, held, rows), noise).loss;
  CHECK(after < before);
}

TEST_CASE("training rejects mismatched windows") {
  const WindowSet ws = lorenz_windows(100, 1);
  TrainConfig tc;
  tc.epochs = 1;
  try {
    train(ws, tiny_config(ModelKind::CondJoint), tc);  // needs 3-state windows
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeMismatch);
  }
}

TEST_CASE("conditional models train on three-state windows") {
  const Trajectory t = integrate_lorenz63(Eigen::Vector3d(1, 1, 1), Lorenz63Params{}, 0.025, 3000);
  Rng rng(1);
  const WindowSet ws = build_windows(t, 3, 600, {5.0, 70.0}, Sampling::UniformRandom, rng);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 100;
  for (ModelKind kind : {ModelKind::CondJoint, ModelKind::BaselineCond}) {
    const VaeModel m = train(ws, tiny_config(kind), tc);
    const Batch b = make_batch(m, ws, {0, 1});
    CHECK(b.cond.rows() == 6);
    CHECK(b.out.rows() == m.config.out_dim());
    // the output block is the newest states of the window
    const Vector newest = m.normalizer.invert(Vector(b.out.col(0)));
    CHECK((newest.tail(3).transpose() - ws.data.row(0).tail(3)).cwiseAbs().maxCoeff() < 1e-12);
  }
}
