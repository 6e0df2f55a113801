#include "jgf/inference.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace jgf;

namespace {

PointCloud random_cloud(Index N, Index d, Rng& rng, Index n_out = 2) {
  PointCloud c;
  c.n_out = n_out;
  c.d = d;
  c.samples = standard_normal(N, n_out * d, rng);
  c.scale = Vector::Ones(d);
  return c;
}

History one_state(const Vector& x, double dt = 0.1) {
  History h;
  h.states = x.transpose();
  h.dt = dt;
  return h;
}

// Sorts every sample by (squared scaled distance, index) independently of the library.
std::vector<Index> brute_top_k(const PointCloud& c, const Vector& target, Index k) {
  std::vector<std::pair<double, Index>> v;
  for (Index j = 0; j < c.size(); ++j) {
    double s = 0;
    for (Index i = 0; i < target.size(); ++i) {
      const double diff = (c.samples(j, i) - target(i)) / c.scale(i % c.d);
      s += diff * diff;
    }
    v.push_back({s, j});
  }
  std::sort(v.begin(), v.end());
  std::vector<Index> out;
  for (Index i = 0; i < k; ++i) out.push_back(v[static_cast<std::size_t>(i)].second);
  return out;
}

Vector lorenz_step(const Vector& x, double dt) {
  const Lorenz63Params p;
  const auto f = [&](const Vector& s) { return lorenz63_rhs(s, p); };
  const Vector k1 = f(x), k2 = f(x + 0.5 * dt * k1), k3 = f(x + 0.5 * dt * k2), k4 = f(x + dt * k3);
  return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
}

}  // namespace

TEST_CASE("top-k equals a brute-force sort") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    PointCloud c = random_cloud(500, 3, rng);
    c.scale = (Vector(3) << 1.0, 2.0, 0.5).finished();
    const Vector x = standard_normal(3, 1, rng);
    const Ensemble e = top_k_match(c, one_state(x), 17);
    CHECK(e.indices == brute_top_k(c, x, 17));
    CHECK(e.size() == 17);
    e.validate();
    CHECK(match_best(c, one_state(x)).index == e.indices[0]);
    CHECK(match_best(c, one_state(x)).distance == doctest::Approx(e.distances(0)).epsilon(1e-15));
  }
}

TEST_CASE("sorted projection index returns exactly the exhaustive result") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    const Index n_out = 2 + static_cast<Index>(seed % 2);
    PointCloud c = random_cloud(300 + static_cast<Index>(seed) * 37, 3, rng, n_out);
    c.scale = (Vector(3) << 0.7, 1.3, 2.0).finished();
    // duplicated rows exercise tie-breaking
    c.samples.bottomRows(20) = c.samples.topRows(20);
    const SortedProjectionIndex idx(c);
    for (int q = 0; q < 10; ++q) {
      History h;
      h.states = standard_normal(n_out - 1, 3, rng);
      if (q == 0) h.states = unflatten_window(Vector(c.samples.row(3).head((n_out - 1) * 3).transpose()), n_out - 1, 3);
      for (Index k : {Index{1}, Index{7}, Index{64}}) {
        const Ensemble a = top_k_match(c, h, k);
        const Ensemble b = idx.top_k(h, k);
        CHECK(a.indices == b.indices);
        CHECK(a.members == b.members);
        CHECK(a.distances == b.distances);
      }
    }
  }
}

TEST_CASE("ties go to the lowest index") {
  PointCloud c;
  c.n_out = 2;
  c.d = 1;
  c.scale = Vector::Ones(1);
  c.samples.resize(5, 2);
  c.samples << 1, 10, -1, 11, 1, 12, 2, 13, -1, 14;
  const History h = one_state(Vector::Zero(1));
  CHECK(match_best(c, h).index == 0);
  const Ensemble e = top_k_match(c, h, 4);
  CHECK(e.indices == std::vector<Index>{0, 1, 2, 4});
  CHECK(SortedProjectionIndex(c).top_k(h, 4).indices == e.indices);
}

TEST_CASE("matched set is invariant under permuting the cloud") {
  Rng rng(8);
  const PointCloud c = random_cloud(400, 2, rng);
  std::vector<Index> perm(400);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  PointCloud p = c;
  for (Index j = 0; j < 400; ++j) p.samples.row(j) = c.samples.row(perm[static_cast<std::size_t>(j)]);
  const History h = one_state(standard_normal(2, 1, rng));
  const Ensemble a = top_k_match(c, h, 10), b = top_k_match(p, h, 10);
  CHECK(a.members == b.members);
  for (std::size_t i = 0; i < 10; ++i) CHECK(perm[static_cast<std::size_t>(b.indices[i])] == a.indices[i]);
}

TEST_CASE("matching errors") {
  Rng rng(1);
  const PointCloud c = random_cloud(10, 3, rng);
  const History h = one_state(Vector::Zero(3));
  CHECK_THROWS_AS(top_k_match(c, h, 11), Error);
  try {
    top_k_match(c, h, 11);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::KTooLarge);
  }
  PointCloud empty = c;
  empty.samples.resize(0, 6);
  try {
    match_best(empty, h);
    FAIL("expected EmptyCloud");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyCloud);
  }
  try {
    match_best(c, one_state(Vector::Zero(2)));
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DimensionMismatch);
  }
}

TEST_CASE("history bookkeeping") {
  History h;
  h.states = (Matrix(3, 2) << 1, 2, 3, 4, 5, 6).finished();
  h.dt = 0.5;
  CHECK(h.recent(2) == (Vector(4) << 3, 4, 5, 6).finished());
  h.advance((Vector(2) << 7, 8).finished());
  CHECK(h.states == (Matrix(3, 2) << 3, 4, 5, 6, 7, 8).finished());
  CHECK(h.t_last == 0.5);
}

TEST_CASE("noise-free oracle sieve reproduces the true trajectory") {
  const double dt = 0.025;
  const OracleSampler oracle([dt](const Vector& x) { return lorenz_step(x, dt); }, 0.0, 0.0);
  const Vector x0 = (Vector(3) << 1.0, 1.0, 20.0).finished();
  SieveConfig cfg;
  cfg.n_samples = 8;
  cfg.k = 4;
  Rng rng(1);
  const ForecastResult r = forecast_sieve(oracle, one_state(x0, dt), 50, cfg, rng);
  Vector x = x0;
  for (Index t = 0; t < 50; ++t) {
    x = lorenz_step(x, dt);
    CHECK((r.forecast.states.row(t).transpose() - x).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(r.resample);
  CHECK(r.cloud_draws == 50);
  CHECK(r.forecast.t0 == doctest::Approx(dt));
}

TEST_CASE("fixed-cloud forecasting and draw accounting") {
  Rng rng(3);
  // A cloud of exact (x, x+1) pairs on a lattice: the forecast walks up one per step.
  PointCloud c;
  c.n_out = 2;
  c.d = 1;
  c.scale = Vector::Ones(1);
  c.samples.resize(100, 2);
  for (Index j = 0; j < 100; ++j) c.samples.row(j) << static_cast<double>(j), static_cast<double>(j + 1);
  SieveConfig cfg;
  cfg.k = 3;
  const ForecastResult r = forecast_sieve(c, one_state(Vector::Constant(1, 5.2)), 10, cfg);
  for (Index t = 0; t < 10; ++t) CHECK(r.forecast.states(t, 0) == static_cast<double>(6 + t));
  CHECK(r.cloud_draws == 1);
  CHECK(r.ensembles.size() == 10);
  CHECK(r.match_distances[0] == doctest::Approx(0.2));
  cfg.use_index = true;
  CHECK(forecast_sieve(c, one_state(Vector::Constant(1, 5.2)), 10, cfg).forecast.states == r.forecast.states);

  const ForecastResult empty = forecast_sieve(c, one_state(Vector::Constant(1, 5.2)), 0, cfg);
  CHECK(empty.forecast.states.rows() == 0);
  CHECK(empty.ensembles.empty());
}

TEST_CASE("unconditional sampler: reuse, resample and refresh") {
  ModelConfig mc;
  mc.d = 2;
  mc.latent_dim = 2;
  mc.hidden_dims = {4};
  const VaeModel m = init_model(mc, Normalizer::identity(2), 3);
  const ModelSampler s(m);
  History h;
  h.states = Matrix::Zero(1, 2);
  SieveConfig cfg;
  cfg.n_samples = 50;
  cfg.k = 5;
  Rng rng(1);
  CHECK(forecast_sieve(s, h, 12, cfg, rng).cloud_draws == 1);
  cfg.refresh_every = 5;
  CHECK(forecast_sieve(s, h, 12, cfg, rng).cloud_draws == 3);
  cfg.resample = true;
  const ForecastResult r = forecast_sieve(s, h, 12, cfg, rng);
  CHECK(r.cloud_draws == 12);
  CHECK(r.resample);
  // index path gives identical forecasts from the same stream
  cfg.use_index = true;
  Rng a(9), b(9);
  SieveConfig scan = cfg;
  scan.use_index = false;
  CHECK(forecast_sieve(s, h, 12, cfg, a).forecast.states == forecast_sieve(s, h, 12, scan, b).forecast.states);
}

TEST_CASE("latent tail gradient matches finite differences") {
  const double h = 1e-6;
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(200 + seed);
    ModelConfig mc;
    mc.d = 3;
    mc.latent_dim = 3;
    mc.hidden_dims = {8, 8};
    Normalizer nz;
    nz.mean = standard_normal(3, 1, rng);
    nz.std = (Vector(3) << 0.5, 1.5, 3.0).finished();
    const VaeModel m = init_model(mc, nz, seed);
    const Vector target = standard_normal(3, 1, rng) * 3.0;
    const Vector z = standard_normal(3, 1, rng);
    const Vector g = latent_tail_gradient(m, z, target);
    for (Index i = 0; i < 3; ++i) {
      Vector zp = z, zm = z;
      zp(i) += h;
      zm(i) -= h;
      const double fd = (latent_tail_loss(m, zp, target) - latent_tail_loss(m, zm, target)) / (2 * h);
      worst = std::max(worst, std::abs(fd - g(i)) / std::max({std::abs(fd), std::abs(g(i)), 1e-7}));
    }
  }
  CHECK(worst < 1e-4);
}

namespace {

// Decoder = a single affine layer z -> A z + b with identity normalizer.
VaeModel linear_model(const Matrix& A, const Vector& b) {
  ModelConfig mc;
  mc.d = A.rows() / 2;
  mc.latent_dim = A.cols();
  mc.hidden_dims = {};
  VaeModel m = init_model(mc, Normalizer::identity(mc.d), 1);
  const DenseLayer& l = m.decoder.layers[0];
  Eigen::Map<Matrix>(m.params.data() + l.offset, l.out, l.in) = A;
  m.params.segment(l.bias_offset(), l.out) = b;
  return m;
}

}  // namespace

TEST_CASE("latent control on a linear decoder approaches the least-squares latent") {
  Rng rng(4);
  const Matrix A = standard_normal(4, 3, rng);
  const Vector b = standard_normal(4, 1, rng);
  const VaeModel m = linear_model(A, b);
  // tail = rows 0..1; underdetermined -> exact zero residual is attainable
  const Vector target = (Vector(2) << 0.7, -0.4).finished();
  LatentControlConfig cfg;
  cfg.max_iters = 5000;
  cfg.step_size = 0.05;
  cfg.tol = 1e-9;
  const LatentControlResult r = latent_control_step(m, Vector::Zero(3), target, cfg);
  const Matrix At = A.topRows(2);
  const double lsq = (At * At.colPivHouseholderQr().solve(target - b.head(2)) + b.head(2) - target).norm();
  CHECK(lsq < 1e-12);
  CHECK(r.loss < 1e-6);
  CHECK(r.loss <= r.initial_loss);

  // overdetermined tail: 1 latent, 2 tail coordinates -> residual of the normal equations
  const Matrix A1 = standard_normal(4, 1, rng);
  const VaeModel m1 = linear_model(A1, b);
  const LatentControlResult r1 = latent_control_step(m1, Vector::Zero(1), target, cfg);
  const Matrix T1 = A1.topRows(2);
  const Vector zs = T1.colPivHouseholderQr().solve(target - b.head(2));
  const double best = (T1 * zs + b.head(2) - target).norm();
  CHECK(r1.loss == doctest::Approx(best).epsilon(1e-6));
  CHECK(std::abs(r1.z(0) - zs(0)) < 1e-4);
}

TEST_CASE("latent control never increases the loss and zero iterations is a no-op") {
  Rng rng(5);
  ModelConfig mc;
  mc.d = 2;
  mc.latent_dim = 2;
  mc.hidden_dims = {16};
  const VaeModel m = init_model(mc, Normalizer::identity(2), 11);
  LatentControlConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    const Vector z = standard_normal(2, 1, rng);
    const Vector target = standard_normal(2, 1, rng);
    double last = latent_tail_loss(m, z, target);
    for (Index iters : {Index{1}, Index{5}, Index{20}, Index{100}}) {
      cfg.max_iters = iters;
      const LatentControlResult r = latent_control_step(m, z, target, cfg);
      CHECK(r.loss <= last);
      CHECK(r.loss == doctest::Approx(latent_tail_loss(m, r.z, target)).epsilon(1e-14));
      last = r.loss;
    }
    cfg.max_iters = 0;
    CHECK(latent_control_step(m, z, target, cfg).z == z);
  }
}

TEST_CASE("latent refinement with huge tolerance reduces to the plain sieve") {
  ModelConfig mc;
  mc.d = 2;
  mc.latent_dim = 2;
  mc.hidden_dims = {8};
  const VaeModel m = init_model(mc, Normalizer::identity(2), 2);
  History h;
  h.states = Matrix::Constant(1, 2, 0.1);
  SieveConfig sc;
  sc.n_samples = 200;
  sc.k = 4;
  LatentControlConfig lc;
  lc.init = LatentInit::BestSieved;
  lc.tol = 1e300;
  Rng a(3), b(3);
  const ForecastResult sieve = forecast_sieve(ModelSampler(m), h, 15, sc, a);
  const ForecastResult latent = forecast_latent(m, h, 15, lc, sc, b);
  CHECK(latent.forecast.states == sieve.forecast.states);
  CHECK(latent.mode == ForecastMode::SieveLatent);
  CHECK(latent.cloud_draws == sieve.cloud_draws);

  lc.tol = 1e-8;
  Rng c(3);
  const ForecastResult refined = forecast_latent(m, h, 15, lc, sc, c);
  for (std::size_t t = 0; t < 15; ++t) CHECK(refined.ensembles[t].distances(0) <= refined.ensembles[t].distances(std::min<Index>(1, 3)) + 1e-15);
}

TEST_CASE("latent forecasting rejects conditional models") {
  ModelConfig mc;
  mc.kind = ModelKind::CondJoint;
  mc.d = 2;
  mc.hidden_dims = {4};
  const VaeModel m = init_model(mc, Normalizer::identity(2), 1);
  History h;
  h.states = Matrix::Zero(2, 2);
  Rng rng(1);
  try {
    forecast_latent(m, h, 3, LatentControlConfig{}, SieveConfig{}, rng);
    FAIL("expected CondUnexpected");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::CondUnexpected);
  }
}
