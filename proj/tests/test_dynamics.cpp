#include <cmath>
#include <functional>

#include "doctest.h"
#include "migepi/dynamics.hpp"
#include "migepi/error.hpp"
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

double rel_sup(const Field& a, const Field& b) { return sup_norm(a - b) / sup_norm(b); }

}  // namespace

TEST_CASE("snapshot times include both ends") {
  const auto t = snapshot_times(2.0, 5);
  CHECK(t == std::vector<double>{0.0, 0.5, 1.0, 1.5, 2.0});
  CHECK(snapshot_times(0.0, 1) == std::vector<double>{0.0});
  CHECK(code_of([] { snapshot_times(1.0, 1); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { snapshot_times(-1.0, 3); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("zero kernel keeps every density") {
  const Grid g = build_uniform_grid_1d(0, 1, 6);
  const Field n0 = oracle::random_field(6, 1);
  const Trajectory tr = evolve_linear(build_generator(build_kernel(g, Matrix::Zero(6, 6))), n0,
                                      5.0, 6);
  for (const auto& s : tr.snapshots) CHECK(s.values == n0);
}

TEST_CASE("a cell nobody migrates into decays at its emigration rate") {
  const Grid g = build_uniform_grid_1d(0, 1, 5);
  Matrix v = oracle::random_kernel(5, 2);
  v.row(0).setZero();  // no arrivals at cell 0
  const KernelData k = build_kernel(g, v);
  const Field n0 = Field::Ones(5);
  const Trajectory tr = evolve_linear(build_generator(k), n0, 3.0, 7);
  for (const auto& s : tr.snapshots) {
    CHECK(s.values[0] == doctest::Approx(std::exp(-s.time * k.emigration()[0])).epsilon(1e-12));
  }
}

TEST_CASE("a cell nobody leaves increases strictly") {
  const Grid g = build_uniform_grid_1d(0, 1, 5);
  Matrix v = oracle::random_kernel(5, 3);
  v.col(2).setZero();  // no departures from cell 2
  const Trajectory tr = evolve_linear(build_generator(build_kernel(g, v)), Field::Ones(5), 4.0, 21);
  for (std::size_t kk = 1; kk < tr.snapshots.size(); ++kk) {
    CHECK(tr.snapshots[kk].values[2] > tr.snapshots[kk - 1].values[2]);
  }
}

TEST_CASE("evolve_linear input validation") {
  const GeneratorMatrix g = build_generator(constant_kernel(build_uniform_grid_1d(0, 1, 3), 1.0));
  CHECK(code_of([&] { evolve_linear(g, Field::Ones(2), 1.0, 2); }) ==
        ErrorCode::DimensionMismatch);
  CHECK(code_of([&] { evolve_linear(g, -Field::Ones(3), 1.0, 2); }) == ErrorCode::NegativeValue);
  Field nan = Field::Ones(3);
  nan[1] = std::nan("");
  CHECK(code_of([&] { evolve_linear(g, nan, 1.0, 2); }) == ErrorCode::NonFinite);
}

TEST_CASE("homogeneous closed form with N0 = 2x") {
  const double c = 0.8;
  const Grid g = build_uniform_grid_1d(0, 1, 50);
  const Field n0 = 2.0 * g.first_coordinates();
  const GeneratorMatrix gen = build_generator(constant_kernel(g, c));
  const Trajectory tr = evolve_linear(gen, n0, 10.0, 101);
  for (const auto& s : tr.snapshots) {
    const Field expect = n0 * std::exp(-c * s.time) +
                         Field::Constant(50, 1.0 - std::exp(-c * s.time));
    CHECK(rel_sup(s.values, expect) <= 1e-12);
    CHECK(rel_sup(closed_form_homogeneous(g, c, n0, s.time), expect) <= 1e-14);
  }
  CHECK(closed_form_homogeneous(g, c, n0, 0.0) == n0);
  const Field late = closed_form_homogeneous(g, c, n0, 200.0);
  CHECK((late.array() - 1.0).abs().maxCoeff() <= 1e-12);
  const Field five = closed_form_homogeneous(g, 1.0, Field::Constant(50, 5.0), 3.7);
  CHECK((five.array() - 5.0).abs().maxCoeff() <= 1e-13);
}

TEST_CASE("destination-only closed form with v = 1 + x") {
  const Grid g = build_uniform_grid_1d(0, 1, 40);
  const Field v = Field::Ones(40) + g.first_coordinates();
  const KernelData k = destination_only_kernel(g, [](const Point& x) { return 1.0 + x[0]; });
  const Field n0 = Field::Ones(40);
  for (double t : {0.1, 1.0, 5.0}) {
    const Field expect = Field::Constant(40, std::exp(-1.5 * t)) +
                         v * (1.0 - std::exp(-1.5 * t)) / 1.5;
    CHECK(rel_sup(closed_form_destination_only(g, v, n0, t), expect) <= 1e-14);
    const Trajectory tr = evolve_linear(build_generator(k), n0, t, 2);
    CHECK(rel_sup(tr.snapshots.back().values, expect) <= 1e-12);
  }
  CHECK(closed_form_destination_only(g, v, n0, 0.0) == n0);
  CHECK(rel_sup(closed_form_destination_only(g, v, n0, 100.0), v / 1.5) <= 1e-14);
  CHECK(code_of([&] { closed_form_destination_only(g, Field::Zero(40), n0, 1.0); }) ==
        ErrorCode::InvalidArgument);
}

namespace {

struct TwoPieceSetup {
  Grid grid = build_uniform_grid_1d(0, 1, 40);
  TwoPieceParams params;
  KernelData kernel;

  TwoPieceSetup() {
    const Field x = grid.first_coordinates();
    params.v1 = Field::Ones(40) + x.array().square().matrix();
    params.v2 = (2.0 - x.array()).matrix() * 0.7;
    params.blocks = blocks_from_breakpoints(grid, {0.4});
    Matrix v(40, 40);
    for (Eigen::Index j = 0; j < 40; ++j) {
      v.col(j) = params.blocks[static_cast<std::size_t>(j)] == 0 ? params.v1 : params.v2;
    }
    kernel = build_kernel(grid, v);
  }
};

}  // namespace

TEST_CASE("two-piece closed form matches the evolution") {
  const TwoPieceSetup s;
  const Field n0 = oracle::random_field(40, 5, 0.0, 2.0);
  const GeneratorMatrix gen = build_generator(s.kernel);
  const TwoPieceCoefficients c = two_piece_coefficients(s.grid, s.params);
  for (double t : {0.1, 1.0, 10.0}) {
    const Field n = evolve_linear(gen, n0, t, 2).snapshots.back().values;
    CHECK(rel_sup(closed_form_two_piece(s.grid, s.params, n0, t), n) <= 1e-10);
    const auto y = two_piece_block_masses(s.grid, s.params, n0, t);
    double y1 = 0;
    for (std::size_t i = 0; i < 16; ++i) y1 += s.grid.weight(i) * n[static_cast<Eigen::Index>(i)];
    CHECK(std::abs(y[0] - y1) <= 1e-12);
    CHECK(std::abs(y[0] + y[1] - integrate(s.grid, n0)) <= 1e-13);
  }
  CHECK(closed_form_two_piece(s.grid, s.params, n0, 0.0).isApprox(n0, 1e-15));
  const double m0 = integrate(s.grid, n0);
  const Field limit = closed_form_two_piece(s.grid, s.params, n0, 400.0);
  CHECK(rel_sup(limit, m0 * two_piece_steady_state(s.grid, s.params)) <= 1e-12);
  CHECK(rel_sup(m0 * two_piece_steady_state(s.grid, s.params), m0 * steady_state(s.kernel).n_star) <=
        1e-10);
  CHECK(c.a12 + c.a21 > 0);
}

TEST_CASE("two-piece block deviation decays at a12 + a21") {
  const TwoPieceSetup s;
  const TwoPieceCoefficients c = two_piece_coefficients(s.grid, s.params);
  const Field n0 = Field::Ones(40);
  const double m0 = integrate(s.grid, n0);
  const double lambda = c.a12 + c.a21;
  const double y1_inf = c.a12 * m0 / lambda;
  const double d0 = two_piece_block_masses(s.grid, s.params, n0, 0.0)[0] - y1_inf;
  for (double t : {0.5, 2.0, 6.0}) {
    const double d = two_piece_block_masses(s.grid, s.params, n0, t)[0] - y1_inf;
    CHECK(d / d0 == doctest::Approx(std::exp(-lambda * t)).epsilon(1e-12));
  }
  // The full operator gap cannot exceed the block-mass rate.
  CHECK(spectral_gap(build_generator(s.kernel)) <= lambda * (1 + 1e-10));
}

TEST_CASE("symmetric two-piece system stays at the fixed point") {
  const Grid g = build_uniform_grid_1d(0, 1, 20);
  TwoPieceParams p{Field::Ones(20), Field::Ones(20), blocks_from_breakpoints(g, {0.5})};
  for (double t : {0.0, 0.3, 7.0}) {
    const auto y = two_piece_block_masses(g, p, Field::Ones(20), t);
    CHECK(y[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(y[1] == doctest::Approx(0.5).epsilon(1e-15));
  }
}

TEST_CASE("two-piece ergodicity condition") {
  const Grid g = build_uniform_grid_1d(0, 1, 10);
  TwoPieceParams p{Field::Ones(10), Field::Ones(10), blocks_from_breakpoints(g, {0.5})};
  p.v1[7] = 0.0;  // v1 must stay positive on block 1
  CHECK(code_of([&] { closed_form_two_piece(g, p, Field::Ones(10), 1.0); }) ==
        ErrorCode::InvalidArgument);
}

TEST_CASE("n-piece reduction with two blocks matches the two-piece formula") {
  const TwoPieceSetup s;
  const Field n0 = oracle::random_field(40, 8);
  const BlockReduction red = n_piece_reduce(s.kernel, s.params.blocks, n0);
  const TwoPieceCoefficients c = two_piece_coefficients(s.grid, s.params);
  CHECK(red.xi[0] == doctest::Approx(c.a12 / (c.a12 + c.a21)).epsilon(1e-13));
  CHECK(red.xi[1] == doctest::Approx(c.a21 / (c.a12 + c.a21)).epsilon(1e-13));
  for (double t : {0.2, 2.0, 20.0}) {
    const Field y = red.masses_at(t);
    const auto y2 = two_piece_block_masses(s.grid, s.params, n0, t);
    CHECK(std::abs(y[0] - y2[0]) <= 1e-12);
    CHECK(std::abs(y[1] - y2[1]) <= 1e-12);
  }
  CHECK(rel_sup(n_piece_steady_state(s.kernel, red), two_piece_steady_state(s.grid, s.params)) <=
        1e-12);
}

TEST_CASE("three-block reduction agrees with the full evolution") {
  const Grid g = build_uniform_grid_1d(0, 1, 45);
  const auto blocks = blocks_from_breakpoints(g, {0.2, 0.6});
  std::vector<Profile> profiles;
  for (std::uint64_t b = 0; b < 3; ++b) {
    const Field f = oracle::random_field(45, 70 + b, 0.2, 2.0);
    profiles.push_back([f, &g](const Point& x) {
      const auto i = static_cast<Eigen::Index>((x[0] - 0.0) * 45.0);
      return f[i];
    });
  }
  const KernelData k = piecewise_semi_constant_kernel(g, blocks, profiles);
  const Field n0 = oracle::random_field(45, 9);
  const BlockReduction red = n_piece_reduce(k, blocks, n0);
  CHECK(sup_norm(red.generator() * red.xi) <= 1e-12);
  const Trajectory tr = evolve_linear(build_generator(k), n0, 8.0, 17);
  for (const auto& snap : tr.snapshots) {
    const Field y = red.masses_at(snap.time);
    for (std::size_t b = 0; b < 3; ++b) {
      double m = 0;
      for (std::size_t i : red.blocks[b]) m += g.weight(i) * snap.values[static_cast<Eigen::Index>(i)];
      CHECK(std::abs(m - y[static_cast<Eigen::Index>(b)]) <= 1e-10);
    }
  }
  const SpectralSummary ss = steady_state(k);
  CHECK(rel_sup(n_piece_steady_state(k, red), ss.n_star) <= 1e-10);
}

TEST_CASE("n-piece reduction errors") {
  const Grid g = build_uniform_grid_1d(0, 1, 8);
  const auto blocks = blocks_from_breakpoints(g, {0.5});
  CHECK(code_of([&] { n_piece_reduce(build_kernel(g, oracle::random_kernel(8, 1)), blocks,
                                     Field::Ones(8)); }) == ErrorCode::NotSemiConstant);
  Matrix v = Matrix::Ones(8, 8);
  v.block(4, 0, 4, 4).setZero();  // block 0 never sends into block 1
  CHECK(code_of([&] { n_piece_reduce(build_kernel(g, v), blocks, Field::Ones(8)); }) ==
        ErrorCode::ReducibleBlocks);
}

TEST_CASE("separable kernel limits") {
  const Grid g = build_uniform_grid_1d(0, 1, 20);
  Matrix v = Matrix::Zero(20, 20);
  v.topLeftCorner(10, 10) = oracle::random_kernel(10, 1);
  v.bottomRightCorner(10, 10) = oracle::random_kernel(10, 2);
  const KernelData k = build_kernel(g, v);

  Field n0 = Field::Zero(20);
  n0.head(10) = oracle::random_field(10, 3);
  const NonergodicReport rep = analyze_nonergodic(k, n0, 100.0);
  CHECK(rep.classification == ErgodicClass::Separable);
  CHECK(rep.limit_field.tail(10).isZero());
  CHECK(rep.final_deviation <= 1e-6);

  const Field m = oracle::random_field(20, 4, 0.5, 1.5);
  const NonergodicReport both = analyze_nonergodic(k, m, 100.0);
  REQUIRE(both.components.size() == 2);
  Field expect = Field::Zero(20);
  for (const auto& c : both.components) {
    double mass = 0;
    for (std::size_t i : c.cells) mass += g.weight(i) * m[static_cast<Eigen::Index>(i)];
    CHECK(c.mass == doctest::Approx(mass).epsilon(1e-14));
    expect += mass * c.n_star;
  }
  CHECK(sup_norm(both.limit_field - expect) <= 1e-14);
  CHECK(both.final_deviation <= 1e-6);
}

TEST_CASE("one-way kernel drains the upstream block") {
  const Grid g = build_uniform_grid_1d(0, 1, 20);
  Matrix v = Matrix::Zero(20, 20);
  v.topLeftCorner(10, 10) = oracle::random_kernel(10, 5);
  v.bottomRightCorner(10, 10) = oracle::random_kernel(10, 6);
  v.bottomLeftCorner(10, 10) = 0.3 * oracle::random_kernel(10, 7);  // 0..9 -> 10..19
  const KernelData k = build_kernel(g, v);
  const NonergodicReport rep = analyze_nonergodic(k, Field::Ones(20), 200.0, 41);
  CHECK(rep.classification == ErgodicClass::OneWay);
  CHECK(rep.upstream == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK(rep.upstream_sup_final <= 1e-6 * rep.upstream_sup_initial);
  CHECK(std::abs(rep.final_mass - rep.initial_mass) <= 1e-10 * rep.initial_mass);
  CHECK(rep.upstream_decay_rate >= rep.min_upstream_leak - 1e-9);
  // Upstream mass decreases monotonically.
  double prev = 1e300;
  for (const auto& snap : rep.trajectory.snapshots) {
    const double mu = g.weights().head(10).dot(snap.values.head(10));
    CHECK(mu < prev);
    prev = mu;
  }
}

TEST_CASE("non-ergodic analysis rejects other classes") {
  const Grid g = build_uniform_grid_1d(0, 1, 6);
  CHECK(code_of([&] { analyze_nonergodic(constant_kernel(g, 1.0), Field::Ones(6), 1.0); }) ==
        ErrorCode::WrongClassification);
}

TEST_CASE("decay fit on the homogeneous kernel") {
  const double c = 1.3;
  const Grid g = build_uniform_grid_1d(0, 1, 32);
  const Field n0 = 2.0 * g.first_coordinates();
  const Trajectory tr = evolve_linear(build_generator(constant_kernel(g, c)), n0, 15.0, 61);
  const DecayFit fit = fit_decay(tr, {Field::Ones(32), 0.0});
  CHECK(fit.kappa_hat == doctest::Approx(c).epsilon(0.02));
  CHECK(fit.points >= 4);
  DecayFitOptions l1;
  l1.norm = DeviationNorm::L1;
  CHECK(fit_decay(tr, {Field::Ones(32), 0.0}, l1).kappa_hat == doctest::Approx(c).epsilon(0.02));

  const Trajectory flat =
      evolve_linear(build_generator(constant_kernel(g, c)), Field::Ones(32), 5.0, 11);
  CHECK(code_of([&] { fit_decay(flat, {Field::Ones(32), 0.0}); }) ==
        ErrorCode::AlreadyConverged);
}

TEST_CASE("positivity and conservation on random kernels") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Grid g = build_uniform_grid_1d(0, 2, 30);
    Matrix v = oracle::random_kernel(30, seed, 0.0, 2.0);
    for (Eigen::Index i = 0; i < 30; ++i) v(i, (i * 7) % 30) = 0.0;
    const Field n0 = oracle::random_field(30, seed + 10);
    const Trajectory tr = evolve_linear(build_generator(build_kernel(g, v)), n0, 20.0, 41);
    const double m0 = tr.mass(0);
    for (std::size_t kk = 0; kk < tr.snapshots.size(); ++kk) {
      CHECK(std::abs(tr.mass(kk) - m0) <= 1e-10 * m0);
      CHECK(tr.snapshots[kk].values.minCoeff() >= -1e-12 * n0.maxCoeff());
    }
  }
}

TEST_CASE("evolution matches a direct matrix exponential") {
  for (std::size_t n : {3u, 16u, 64u}) {
    const Grid g = build_uniform_grid_1d(0, 1, n);
    const GeneratorMatrix gen = build_generator(build_kernel(g, oracle::random_kernel(n, n)),
                                                oracle::random_field(n, 1, -0.5, 0.5));
    const Field n0 = oracle::random_field(n, 2);
    const Trajectory tr = evolve_linear(gen, n0, 3.0, 4);
    for (const auto& snap : tr.snapshots) {
      const Field ref = oracle::expm_taylor(gen.h * snap.time) * n0;
      CHECK(rel_sup(snap.values, ref) <= 1e-10);
    }
  }
}

TEST_CASE("balanced exponential growth") {
  const Grid g = build_uniform_grid_1d(0, 1, 24);
  const KernelData k = build_kernel(g, oracle::random_kernel(24, 13));
  const GeneratorMatrix gen = build_generator(k, oracle::random_field(24, 14, 0.0, 0.5));
  const SpectralSummary s = spectral_bound(gen);
  REQUIRE(s.dominant_simple);
  REQUIRE(s.s > 0);
  const Field n0 = oracle::random_field(24, 15);
  const double m0 = s.mu.dot(n0);
  const Trajectory tr = evolve_linear(gen, n0, 50.0 / s.gap, 11);
  for (const auto& snap : tr.snapshots) {
    CHECK(std::abs(s.mu.dot(snap.values) - m0 * std::exp(s.s * snap.time)) <=
          1e-6 * m0 * std::exp(s.s * snap.time));
  }
  const auto& last = tr.snapshots.back();
  CHECK(sup_norm(last.values * std::exp(-s.s * last.time) - m0 * s.n_star) <= 1e-3 * m0);
}
