#include <cmath>
#include <functional>

#include "doctest.h"
#include "migepi/error.hpp"
#include "migepi/linalg.hpp"
#include "migepi/spectral.hpp"
#include "oracles.hpp"

using namespace migepi;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Ok;
}

KernelData random_kernel(std::size_t n, std::uint64_t seed, double length = 1.0) {
  return build_kernel(build_uniform_grid_1d(0, length, n), oracle::random_kernel(n, seed));
}

}  // namespace

TEST_CASE("generator of the two-cell unit kernel") {
  const GeneratorMatrix g = build_generator(constant_kernel(build_uniform_grid_1d(0, 1, 2), 1.0));
  Matrix expect(2, 2);
  expect << -0.5, 0.5, 0.5, -0.5;
  CHECK(g.h.isApprox(expect, 1e-15));
}

TEST_CASE("generator structure") {
  const KernelData k = random_kernel(15, 1, 3.0);
  const Field& w = k.grid().weights();
  const GeneratorMatrix g0 = build_generator(k);
  CHECK((w.transpose() * g0.h).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(g0.h.isApprox(oracle::generator(k.v(), w, Field::Zero(15)), 1e-14));

  const GeneratorMatrix g1 = build_generator(k, Field::Constant(15, 0.7));
  CHECK((g1.h - g0.h - 0.7 * Matrix::Identity(15, 15)).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(code_of([&] { build_generator(k, Field::Zero(14)); }) == ErrorCode::DimensionMismatch);
  Field bad = Field::Zero(15);
  bad[3] = std::nan("");
  CHECK(code_of([&] { build_generator(k, bad); }) == ErrorCode::NonFinite);
}

TEST_CASE("steady state examples") {
  const SpectralSummary c = steady_state(constant_kernel(build_uniform_grid_1d(0, 1, 20), 2.0));
  CHECK((c.n_star.array() - 1.0).abs().maxCoeff() <= 1e-12);
  CHECK(c.s == 0.0);

  // Balanced, not constant: symmetric random kernel on |Omega| = 2.
  const Grid g = build_uniform_grid_1d(0, 2, 24);
  Matrix v = oracle::random_kernel(24, 8);
  v = (v + v.transpose()).eval();
  const SpectralSummary b = steady_state(build_kernel(g, v));
  CHECK((b.n_star.array() - 0.5).abs().maxCoeff() <= 1e-12);
  CHECK(b.mu.isApprox(g.weights() / 2.0));

  const Grid gd = build_uniform_grid_1d(0, 1, 32);
  const KernelData kd = destination_only_kernel(gd, [](const Point& x) { return 1 + x[0] * x[0]; });
  const SpectralSummary d = steady_state(kd);
  const Field ratio = d.n_star.cwiseQuotient(kd.v().col(0));
  CHECK((ratio.array() - ratio[0]).abs().maxCoeff() <= 1e-12 * ratio[0]);
}

TEST_CASE("steady state errors") {
  const Grid g = build_uniform_grid_1d(0, 1, 4);
  Matrix v = Matrix::Zero(4, 4);
  v.topLeftCorner(2, 2).setOnes();
  v.bottomRightCorner(2, 2).setOnes();
  CHECK(code_of([&] { steady_state(build_kernel(g, v)); }) == ErrorCode::NotErgodic);
  // A cycle through cell 0 with zero emigration cannot exist in an ergodic
  // graph, so zero emigration needs a single cell with zero rate.
  const Grid g1 = build_uniform_grid_1d(0, 1, 1);
  CHECK(code_of([&] { steady_state(build_kernel(g1, Matrix::Zero(1, 1))); }) ==
        ErrorCode::ZeroEmigration);
}

TEST_CASE("steady state residual and positivity on random kernels") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const KernelData k = random_kernel(40, 100 + seed, 1.5);
    const SpectralSummary ss = steady_state(k);
    const Field& w = k.grid().weights();
    Field residual = k.v() * w.cwiseProduct(ss.n_star) - k.emigration().cwiseProduct(ss.n_star);
    CHECK(sup_norm(residual) <= 1e-10 * sup_norm(k.emigration()));
    CHECK(ss.n_star.minCoeff() > 0);
    CHECK(w.dot(ss.n_star) == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(ss.gap > 0);
  }
}

TEST_CASE("steady state is independent of the solver and its seed") {
  const KernelData k = random_kernel(30, 77);
  const SpectralSummary dense = steady_state(k);
  for (std::uint64_t seed : {0ull, 1ull, 99ull, 12345ull}) {
    SpectralOptions opts;
    opts.method = EigenMethod::Power;
    opts.seed = seed;
    const SpectralSummary p = steady_state(k, opts);
    CHECK((p.n_star - dense.n_star).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("spectral bound examples") {
  const KernelData c = constant_kernel(build_uniform_grid_1d(0, 1, 16), 1.5);
  const SpectralSummary s = spectral_bound(build_generator(c, Field::Constant(16, 0.3)));
  CHECK(s.s == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(s.dominant_simple);

  const KernelData k = random_kernel(20, 5);
  const SpectralSummary z = spectral_bound(build_generator(k));
  CHECK(std::abs(z.s) <= 1e-12);
  CHECK((z.n_star - steady_state(k).n_star).cwiseAbs().maxCoeff() <= 1e-10);

  const SpectralSummary neg =
      spectral_bound(build_generator(k, oracle::random_field(20, 1, -2.0, -0.1)));
  CHECK(neg.s < 0);
}

TEST_CASE("spectral gap examples") {
  const double c = 1.7;
  const GeneratorMatrix g = build_generator(constant_kernel(build_uniform_grid_1d(0, 1, 12), c));
  CHECK(spectral_gap(g) == doctest::Approx(c).epsilon(1e-12));
  const Eigen::VectorXcd eigs = linalg::eigenvalues(g.h);
  int at_minus_c = 0;
  for (Eigen::Index i = 0; i < eigs.size(); ++i) {
    if (std::abs(eigs[i] + c) < 1e-12) ++at_minus_c;
  }
  CHECK(at_minus_c == 11);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CHECK(spectral_gap(build_generator(random_kernel(18, seed))) > 0);
  }
}

TEST_CASE("dominance is not claimed without ergodicity") {
  const Grid g = build_uniform_grid_1d(0, 1, 4);
  Matrix v = Matrix::Zero(4, 4);
  v.topLeftCorner(2, 2).setOnes();
  v.bottomRightCorner(2, 2).setOnes();
  const GeneratorMatrix gen = build_generator(build_kernel(g, v));
  const SpectralSummary s = spectral_bound(gen);
  CHECK_FALSE(s.dominant_simple);
  CHECK(std::abs(s.s) <= 1e-14);
  CHECK(code_of([&] { spectral_gap(gen); }) == ErrorCode::DominanceNotEstablished);
}

TEST_CASE("left and right Perron vectors in the proliferating case") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const KernelData k = random_kernel(25, 40 + seed);
    const GeneratorMatrix g = build_generator(k, oracle::random_field(25, seed, -0.5, 0.8));
    const SpectralSummary s = spectral_bound(g);
    REQUIRE(s.dominant_simple);
    CHECK(sup_norm(g.h * s.n_star - s.s * s.n_star) <= 1e-10);
    CHECK(sup_norm(g.h.transpose() * s.mu - s.s * s.mu) <= 1e-10);
    CHECK(s.mu.dot(s.n_star) == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(s.mu.sum() == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(s.n_star.minCoeff() > 0);
    CHECK(s.mu.minCoeff() > 0);
  }
}

TEST_CASE("eigenvalue bracket over random kernels and rates") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const KernelData k = random_kernel(10 + seed % 20, 500 + seed, 0.5 + 0.1 * seed);
    const Field r = oracle::random_field(k.size(), seed + 1, -3.0, 3.0);
    const SpectralSummary s = spectral_bound(build_generator(k, r));
    CHECK(s.s >= (r - k.emigration()).maxCoeff() - 1e-9);
    CHECK(s.s <= r.maxCoeff() + 1e-9);
  }
}

TEST_CASE("power path for large grids agrees with dense") {
  const KernelData k = random_kernel(60, 3);
  const GeneratorMatrix g = build_generator(k, oracle::random_field(60, 2, -0.2, 0.2));
  SpectralOptions power;
  power.method = EigenMethod::Power;
  const SpectralSummary a = spectral_bound(g);
  const SpectralSummary b = spectral_bound(g, power);
  CHECK(b.s == doctest::Approx(a.s).epsilon(1e-10));
  CHECK((a.n_star - b.n_star).cwiseAbs().maxCoeff() <= 1e-8 * sup_norm(a.n_star));
}

TEST_CASE("resolvent examples") {
  const GeneratorMatrix g = build_generator(constant_kernel(build_uniform_grid_1d(0, 1, 10), 1.0));
  CHECK(resolvent_solve(g, 1.0, Field::Zero(10)).isZero());
  CHECK((resolvent_solve(g, 1.0, Field::Ones(10)).array() - 1.0).abs().maxCoeff() <= 1e-14);
  CHECK(code_of([&] { resolvent_solve(g, 0.0, Field::Ones(10)); }) == ErrorCode::SingularShift);
}

TEST_CASE("resolvent is positive to the right of the spectral bound") {
  const KernelData k = random_kernel(20, 8);
  const GeneratorMatrix g = build_generator(k, oracle::random_field(20, 3, -1.0, 1.0));
  const double s = spectral_bound(g).s;
  int trial = 0;
  for (double delta : {0.1, 1.0, 10.0}) {
    const Resolvent res(g.h, s + delta);
    for (int i = 0; i < 100; ++i, ++trial) {
      const Field rhs = oracle::random_field(20, 1000 + trial);
      CHECK(res.solve(rhs).minCoeff() >= -1e-12);
    }
  }
}
