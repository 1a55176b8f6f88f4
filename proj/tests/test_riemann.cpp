// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 the ctmpc authors

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <random>

#include "ctmpc/contraction.hpp"
#include "ctmpc/errors.hpp"
#include "ctmpc/model.hpp"
#include "ctmpc/riemann.hpp"

using namespace ctmpc;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

Vector vec1(double a) {
  Vector v(1);
  v << a;
  return v;
}

MetricFunction bump_metric() {
  // diag(1 + x1^2, 1): mildly curved, cheap to reason about
  return MetricFunction::from([](const Vector& x) {
    Matrix m = Matrix::Identity(2, 2);
    m(0, 0) = 1.0 + x[0] * x[0];
    return m;
  });
}

/// Certificate with constant metric/gain assembled directly (no synthesis).
ContractionCertificate manual_certificate(double tau, double beta, const Matrix& metric,
                                          const Matrix& gain) {
  const Matrix w_value = metric.inverse();
  const PolynomialMatrix w =
      PolynomialMatrix::constant(0.5 * (w_value + w_value.transpose()),
                                 static_cast<int>(metric.rows()), true);
  const PolynomialMatrix l = PolynomialMatrix::constant(gain * w_value.transpose(),
                                                        static_cast<int>(metric.rows()), false);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(metric, Eigen::EigenvaluesOnly);
  CertificateGrid grid;
  grid.states = Box::cube(static_cast<int>(metric.rows()), -10.0, 10.0);
  grid.inputs = Box::cube(1, -10.0, 10.0);
  return ContractionCertificate(tau, beta, w, l, eig.eigenvalues().minCoeff(),
                                eig.eigenvalues().maxCoeff(), 1e-4, grid, 0.0);
}

const char* study_dir() {
  const char* dir = std::getenv("CTMPC_STUDY_DIR");
  REQUIRE(dir != nullptr);
  return dir;
}

}  // namespace

TEST_CASE("identity-metric straight path has Euclidean length") {
  const MetricFunction metric = MetricFunction::constant(Matrix::Identity(2, 2));
  for (int segments : {1, 4, 16, 64}) {
    GeodesicOptions options;
    options.segments = segments;
    const GeodesicPath path = geodesic(metric, vec2(0, 0), vec2(3, 4), options);
    CHECK(path_length(metric, path) == doctest::Approx(5.0).epsilon(1e-12));
  }
}

TEST_CASE("constant diagonal metric scales the straight-line length") {
  Matrix m(2, 2);
  m << 4, 0, 0, 1;
  const MetricFunction metric = MetricFunction::constant(m);
  const GeodesicPath path = geodesic(metric, vec2(0, 0), vec2(1, 0));
  CHECK(path.length == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(path.energy == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("zero-length path has zero length exactly") {
  const MetricFunction metric = MetricFunction::constant(Matrix::Identity(2, 2));
  const GeodesicPath path = geodesic(metric, vec2(2, 3), vec2(2, 3));
  CHECK(path.length == 0.0);
  CHECK(path_length(metric, path) == 0.0);
}

TEST_CASE("constant-metric geodesics are straight lines with quadratic energy") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> coord(-4.0, 4.0);
  Matrix m(2, 2);
  m << 2.0, 0.4, 0.4, 1.5;
  const MetricFunction metric = MetricFunction::constant(m);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector a = vec2(coord(rng), coord(rng));
    const Vector b = vec2(coord(rng), coord(rng));
    const GeodesicPath path = geodesic(metric, a, b);
    const Vector delta = b - a;
    CHECK(path.energy == doctest::Approx(delta.dot(m * delta)).epsilon(1e-12));
    for (int i = 0; i <= path.segments(); ++i) {
      const Vector expected = a + delta * (static_cast<double>(i) / path.segments());
      CHECK((path.samples[i] - expected).lpNorm<Eigen::Infinity>() < 1e-12);
    }
  }
}

TEST_CASE("identity metric distance between fixed points") {
  const MetricFunction metric = MetricFunction::constant(Matrix::Identity(2, 2));
  CHECK(riemannian_distance(metric, vec2(1, 1), vec2(4, 5)) ==
        doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("curved-metric geodesic beats the straight line") {
  const MetricFunction metric = bump_metric();
  const GeodesicPath curved = geodesic(metric, vec2(-1, 0), vec2(1, 0));

  GeodesicPath straight;
  for (int i = 0; i <= 16; ++i)
    straight.samples.push_back(vec2(-1.0 + 2.0 * i / 16.0, 0.0));
  const double straight_length = path_length(metric, straight);

  CHECK(curved.converged);
  CHECK(curved.length <= straight_length + 1e-9);
  CHECK(curved.length < straight_length);  // the bow around the bump pays off
  CHECK(curved.length * curved.length <= curved.energy + 1e-9);
}

TEST_CASE("geodesic length is invariant under endpoint swap") {
  const MetricFunction metric = bump_metric();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector a = vec2(coord(rng), coord(rng));
    const Vector b = vec2(coord(rng), coord(rng));
    const double forward = geodesic(metric, a, b).length;
    const double backward = geodesic(metric, b, a).length;
    CHECK(forward == doctest::Approx(backward).epsilon(1e-7));
  }
}

TEST_CASE("path reversal preserves constant-metric length exactly") {
  Matrix m(2, 2);
  m << 3.0, 0.5, 0.5, 1.0;
  const MetricFunction metric = MetricFunction::constant(m);
  const GeodesicPath path = geodesic(metric, vec2(0, 1), vec2(2, -1));
  GeodesicPath reversed = path;
  std::reverse(reversed.samples.begin(), reversed.samples.end());
  CHECK(path_length(metric, path) == doctest::Approx(path_length(metric, reversed)).epsilon(0));
}

TEST_CASE("refining the discretization changes lengths negligibly") {
  const MetricFunction metric = bump_metric();
  GeodesicOptions coarse;
  coarse.segments = 16;
  GeodesicOptions fine;
  fine.segments = 32;
  const double l16 = geodesic(metric, vec2(-1.5, 0.5), vec2(1.5, -0.5), coarse).length;
  const double l32 = geodesic(metric, vec2(-1.5, 0.5), vec2(1.5, -0.5), fine).length;
  CHECK(std::abs(l32 - l16) / l16 < 0.01);

  const MetricFunction flat = MetricFunction::constant(Matrix::Identity(2, 2));
  const double f16 = geodesic(flat, vec2(-1.5, 0.5), vec2(1.5, -0.5), coarse).length;
  const double f32 = geodesic(flat, vec2(-1.5, 0.5), vec2(1.5, -0.5), fine).length;
  CHECK(f16 == doctest::Approx(f32).epsilon(1e-13));
}

TEST_CASE("geodesic undercuts random perturbed paths") {
  const MetricFunction metric = bump_metric();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  std::normal_distribution<double> noise(0.0, 0.15);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector a = vec2(coord(rng), coord(rng));
    const Vector b = vec2(coord(rng), coord(rng));
    const GeodesicPath best = geodesic(metric, a, b);
    GeodesicPath perturbed = best;
    for (int i = 1; i < perturbed.segments(); ++i)
      perturbed.samples[i] += vec2(noise(rng), noise(rng));
    CHECK(best.length <= path_length(metric, perturbed) + 1e-9);
  }
}

TEST_CASE("distance vanishes exactly when the endpoints agree") {
  const MetricFunction metric = bump_metric();
  for (double x1 : {-1.5, 0.0, 2.0}) {
    for (double x2 : {-1.0, 0.5}) {
      CHECK(riemannian_distance(metric, vec2(x1, x2), vec2(x1, x2)) == 0.0);
      CHECK(riemannian_distance(metric, vec2(x1, x2), vec2(x1 + 0.3, x2)) > 0.0);
    }
  }
}

TEST_CASE("cached distances agree with cold solves") {
  const MetricFunction metric = bump_metric();
  GeodesicCache cache;
  GeodesicOptions options;
  Vector a = vec2(-1.0, 0.2), b = vec2(1.2, -0.4);
  const double first = riemannian_distance_cached(metric, a, b, options, cache);
  CHECK(first == doctest::Approx(riemannian_distance(metric, a, b)).epsilon(1e-9));
  // small endpoint moves reuse the warm path within the documented radius
  a += vec2(1e-6, -1e-6);
  const double moved = riemannian_distance_cached(metric, a, b, options, cache);
  CHECK(moved == doctest::Approx(riemannian_distance(metric, a, b)).epsilon(1e-7));
  // large moves re-descend
  b = vec2(-0.5, 1.5);
  const double far = riemannian_distance_cached(metric, a, b, options, cache);
  CHECK(far == doctest::Approx(riemannian_distance(metric, a, b)).epsilon(1e-8));
}

TEST_CASE("integrated feedback reduces to the linear law for constant gain") {
  Matrix metric(2, 2);
  metric << 2.0, 0.3, 0.3, 1.0;
  Matrix gain(1, 2);
  gain << -0.8, -0.4;
  SystemModel model;
  model.state_dim = 2;
  model.input_dim = 1;
  model.state_box = Box::cube(2, -10.0, 10.0);
  model.input_box = Box::cube(1, -100.0, 100.0);
  model.drift = [](const Vector& x, double) { return Vector(0.9 * x); };
  model.input_matrix = [](double) { return Matrix::Constant(2, 1, 0.1); };
  const ContractionCertificate cert = manual_certificate(1.0, 0.3, metric, gain);

  const Vector x = vec2(1.5, -2.0);
  const Vector x_star = vec2(0.5, 0.5);
  const Vector u_star = vec1(0.7);

  SUBCASE("zero gap returns the reference input") {
    CHECK((feedback_control(cert, model, x_star, x_star, u_star) - u_star)
              .lpNorm<Eigen::Infinity>() == 0.0);
  }
  SUBCASE("constant gain integrates to u* + K (x - x*)") {
    const Vector u = feedback_control(cert, model, x, x_star, u_star);
    const Vector expected = u_star + gain * (x - x_star);
    CHECK((u - expected).lpNorm<Eigen::Infinity>() < 1e-12);
  }
  SUBCASE("saturation clamps onto the input box and flags") {
    SystemModel tight = model;
    tight.input_box = Box::cube(1, -0.5, 0.5);
    bool saturated = false;
    const Vector u = feedback_control(cert, tight, x, x_star, u_star, {}, &saturated);
    CHECK(saturated);
    CHECK(u[0] == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("contraction residual signs on the tank under the study certificate") {
  const SystemModel tank = make_tank_model();
  const ContractionCertificate cert =
      load_certificate(std::string(study_dir()) + "/cert_tau1.json");
  const Vector x_star = vec2(2.5, 2.5);
  const Vector u_star = steady_state_input(tank, x_star, 1.0);

  SUBCASE("zero gap, steady input: residual is zero") {
    const double r = constraint_residual(cert, tank, x_star, x_star, u_star, u_star);
    CHECK(std::abs(r) < 1e-9);
  }
  SUBCASE("integrated feedback stays in the contracting set when unsaturated") {
    int tested = 0;
    for (double x1 : {2.0, 2.8, 3.2, 4.0}) {
      for (double x2 : {2.1, 2.6, 3.4}) {
        const Vector x = vec2(x1, x2);
        bool saturated = false;
        const Vector u = feedback_control(cert, tank, x, x_star, u_star, {}, &saturated);
        if (saturated) continue;
        ++tested;
        CHECK(constraint_residual(cert, tank, x, x_star, u, u_star) <= 1e-8);
      }
    }
    CHECK(tested >= 6);
  }
  SUBCASE("pump off from above-target diverges") {
    const double r = constraint_residual(cert, tank, vec2(3, 3), x_star, vec1(0), u_star);
    CHECK(r > 0.0);
  }
  SUBCASE("feedback from (3,3) is admissible and contracts the metric distance") {
    const Vector x = vec2(3, 3);
    bool saturated = false;
    const Vector u = feedback_control(cert, tank, x, x_star, u_star, {}, &saturated);
    CHECK(tank.input_box.contains(u));
    const MetricFunction metric = MetricFunction::from_certificate(cert);
    const Vector x_next = step(tank, x, u, 1.0);
    CHECK(riemannian_distance(metric, x_next, x_star) <
          riemannian_distance(metric, x, x_star));
  }
}

TEST_CASE("strict mode reports non-convergence instead of guessing") {
  // a metric this wild cannot be descended in two iterations
  const MetricFunction nasty = MetricFunction::from([](const Vector& x) {
    Matrix m = Matrix::Identity(2, 2);
    m(0, 0) = 1.0 + 20.0 * std::sin(5.0 * x[0]) * std::sin(5.0 * x[0]);
    m(1, 1) = 1.0 + 20.0 * std::cos(7.0 * x[1]) * std::cos(7.0 * x[1]);
    return m;
  });
  GeodesicOptions strict;
  strict.max_iterations = 1;
  strict.energy_tol = 0.0;
  CHECK_THROWS_AS(geodesic(nasty, vec2(-3, -3), vec2(3, 3), strict), GeodesicError);
  GeodesicOptions relaxed = strict;
  relaxed.relaxed = true;
  const GeodesicPath fallback_path = geodesic(nasty, vec2(-3, -3), vec2(3, 3), relaxed);
  CHECK_FALSE(fallback_path.converged);
}
