#include "jgf/random.hpp"
#include "jgf/transport.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace jgf;

namespace {

// Minimum over all assignments of the mean squared distance (uniform, m == p).
double assignment_w2(const Matrix& A, const Matrix& B) {
  std::vector<Index> perm(static_cast<std::size_t>(A.rows()));
  std::iota(perm.begin(), perm.end(), Index{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (Index i = 0; i < A.rows(); ++i) c += (A.row(i) - B.row(perm[static_cast<std::size_t>(i)])).squaredNorm();
    best = std::min(best, c / static_cast<double>(A.rows()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best);
}

}  // namespace

TEST_CASE("squared distance matrix and median") {
  const Matrix A = (Matrix(2, 2) << 0, 0, 1, 1).finished();
  const Matrix B = (Matrix(3, 2) << 0, 0, 3, 4, 1, 0).finished();
  const Matrix C = squared_distance_matrix(A, B);
  CHECK(C == (Matrix(2, 3) << 0, 25, 1, 2, 13, 1).finished());
  CHECK(median_of(C) == 1.5);
  CHECK(median_of((Matrix(1, 3) << 5, 1, 3).finished()) == 3.0);
  CHECK_THROWS_AS(squared_distance_matrix(A, Matrix::Zero(2, 3)), Error);
}

TEST_CASE("identical point masses have zero distance") {
  const Matrix A = Matrix::Constant(4, 3, 2.5);
  const SinkhornResult r = sinkhorn_w2(A, A.topRows(2));
  CHECK(r.w2 == 0.0);
  CHECK(r.converged);
}

TEST_CASE("point mass against point mass is the Euclidean distance") {
  const Matrix a = (Matrix(1, 3) << 1, 2, 3).finished();
  const Matrix b = (Matrix(1, 3) << 4, 6, 3).finished();
  CHECK(sinkhorn_w2(a, b).w2 == doctest::Approx(5.0).epsilon(1e-12));
  // a point mass against a cloud: every unit of mass moves from the point
  Rng rng(1);
  const Matrix cloud = standard_normal(20, 3, rng);
  const double expect = std::sqrt((cloud.rowwise() - a.row(0)).rowwise().squaredNorm().mean());
  CHECK(sinkhorn_w2(a, cloud).w2 == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("exact 1D W2 oracle") {
  const Vector a = (Vector(3) << 3, 1, 2).finished();
  const Vector b = (Vector(3) << 10, 12, 11).finished();
  CHECK(exact_w2_1d(a, b) == doctest::Approx(9.0));
  CHECK_THROWS_AS(exact_w2_1d(a, Vector(Vector::Zero(2))), Error);
}

TEST_CASE("1D clouds match the sorted-quantile distance within 5%") {
  Rng rng(42);
  std::uniform_real_distribution<double> shift(0.5, 3.0), spread(0.5, 2.0);
  double worst = 0.0;
  for (int pair = 0; pair < 50; ++pair) {
    const Matrix A = standard_normal(256, 1, rng);
    const Matrix B = (standard_normal(256, 1, rng).array() * spread(rng) + shift(rng)).matrix();
    const SinkhornResult r = sinkhorn_w2(A, B);
    const double exact = exact_w2_1d(A.col(0), B.col(0));
    worst = std::max(worst, std::abs(r.w2 - exact) / exact);
  }
  MESSAGE("worst relative error " << worst);
  CHECK(worst < 0.05);
}

TEST_CASE("small clouds match the exhaustive assignment as epsilon shrinks") {
  Rng rng(7);
  SinkhornConfig cfg;
  cfg.epsilon_scale = 1e-4;
  cfg.max_iters = 20000;
  cfg.convergence_tol = 1e-9;
  double worst = 0.0;
  for (Index m = 1; m <= 6; ++m) {
    for (int trial = 0; trial < 5; ++trial) {
      const Matrix A = standard_normal(m, 3, rng);
      const Matrix B = standard_normal(m, 3, rng);
      const SinkhornResult r = sinkhorn_w2(A, B, cfg);
      worst = std::max(worst, std::abs(r.w2 - assignment_w2(A, B)));
    }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("symmetry") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix A = standard_normal(40, 2, rng);
    const Matrix B = (standard_normal(30, 2, rng).array() + 1.0).matrix();
    SinkhornConfig cfg;
    cfg.max_iters = 5000;  // near-degenerate pairs can need more than the default
    const SinkhornResult ab = sinkhorn_w2(A, B, cfg), ba = sinkhorn_w2(B, A, cfg);
    CHECK(ab.converged);
    CHECK(ab.w2 == doctest::Approx(ba.w2).epsilon(1e-5));
  }
}

TEST_CASE("self-distance bias shrinks along an epsilon ladder") {
  Rng rng(5);
  const Matrix A = standard_normal(64, 3, rng);
  const double med = median_of(squared_distance_matrix(A, A));
  double last = std::numeric_limits<double>::infinity();
  for (double scale : {1.0, 0.3, 0.1, 0.03, 0.01, 0.003}) {
    SinkhornConfig cfg;
    cfg.epsilon = scale * med;
    cfg.max_iters = 5000;
    const SinkhornResult r = sinkhorn_w2(A, A, cfg);
    CHECK(r.epsilon == doctest::Approx(scale * med));
    CHECK(r.w2 >= 0.0);
    CHECK(r.w2 < last);
    last = r.w2;
  }
  CHECK(last < 0.05);
}

TEST_CASE("no NaN for far-apart or nearly coincident clouds") {
  Rng rng(6);
  const Matrix A = standard_normal(32, 3, rng);
  const Matrix far = (A.array() + 1e6).matrix();
  const Matrix near = (A.array() + 1e-12).matrix();
  const SinkhornResult r1 = sinkhorn_w2(A, far);
  CHECK(std::isfinite(r1.w2));
  CHECK(r1.w2 == doctest::Approx(std::sqrt(3.0) * 1e6).epsilon(1e-6));
  CHECK(std::isfinite(sinkhorn_w2(A, near).w2));
  Matrix bad = A;
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(sinkhorn_w2(bad, A), Error);
}

TEST_CASE("configuration checks") {
  SinkhornConfig cfg;
  cfg.max_iters = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.epsilon = 0.0;
  cfg.epsilon_scale = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.max_iters = 1;
  Rng rng(1);
  const SinkhornResult r = sinkhorn_w2(standard_normal(50, 2, rng), standard_normal(50, 2, rng), cfg);
  CHECK(r.iterations <= 1);
}
