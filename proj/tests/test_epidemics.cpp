#include <cmath>
#include <functional>

#include "doctest.h"
#include "migepi/epidemics.hpp"
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

Field bump(const Grid& g, double center, double width, double height) {
  Field f = Field::Zero(static_cast<Eigen::Index>(g.size()));
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double d = std::abs(g.center(i)[0] - center) / width;
    if (d < 1.0) {
      const double c = std::cos(0.5 * 3.141592653589793 * d);
      f[static_cast<Eigen::Index>(i)] = height * c * c;
    }
  }
  return f;
}

}  // namespace

TEST_CASE("parameter and field validation") {
  const Grid g = build_uniform_grid_1d(0, 1, 8);
  const KernelData k = constant_kernel(g, 1.0);
  const Field one = Field::Ones(8);
  CHECK(code_of([&] { evolve_si(k, {-1.0, 0, 0}, one, one, 1.0, 2); }) ==
        ErrorCode::NegativeValue);
  CHECK(code_of([&] { evolve_si(k, {1.0, 0, 0}, Field::Ones(7), one, 1.0, 2); }) ==
        ErrorCode::DimensionMismatch);
  CHECK(code_of([&] { evolve_sir(k, {1.0, 1.0, 0}, one, -one, one, 1.0, 2); }) ==
        ErrorCode::NegativeValue);
  Field nan = one;
  nan[3] = std::nan("");
  CHECK(code_of([&] { evolve_sire(k, {1.0, 1.0, 1.0}, one, one, nan, 1.0, 2); }) ==
        ErrorCode::NonFinite);
  CHECK(code_of([&] { SireModel(k, {1.0, 0.0, 1.0}, 1.0); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([&] { SireModel(k, {1.0, 1.0, 0.0}, 1.0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("compartment sum follows the linear migration equation") {
  const Grid g = build_uniform_grid_1d(0, 1, 24);
  const KernelData k = build_kernel(g, oracle::random_kernel(24, 4));
  const Field s0 = oracle::random_field(24, 1, 0.5, 1.5);
  const Field i0 = oracle::random_field(24, 2, 0.0, 0.2);
  const Field r0 = oracle::random_field(24, 3, 0.0, 0.1);
  const EpidemicParams p{2.0, 0.7, 0.3};
  const Trajectory lin = evolve_linear(build_generator(k), s0 + i0 + r0, 6.0, 13);
  EpidemicOptions opts;
  opts.rtol = 1e-11;
  opts.atol_rel = 1e-14;
  const EpidemicTrajectory tr = evolve_sire(k, p, s0, i0, r0, 6.0, 13, opts);
  for (std::size_t kk = 0; kk < tr.snapshots.size(); ++kk) {
    const Field sum = tr.snapshots[kk].total();
    CHECK(sup_norm(sum - lin.snapshots[kk].values) <= 1e-8 * sup_norm(lin.snapshots[kk].values));
    CHECK(std::abs(tr.total_mass(kk) - tr.total_mass(0)) <= 1e-10 * tr.total_mass(0));
    CHECK(tr.snapshots[kk].S.minCoeff() >= 0.0);
    CHECK(tr.snapshots[kk].I.minCoeff() >= 0.0);
    CHECK(tr.snapshots[kk].R.minCoeff() >= 0.0);
  }
}

TEST_CASE("SI and SIR monotone compartment masses") {
  const Grid g = build_uniform_grid_1d(0, 1, 32);
  const KernelData k = coville_kernel(g, 1.0, 0.3, 0.05);
  const Field s0 = Field::Ones(32);
  const Field i0 = bump(g, 0.3, 0.1, 0.05);

  const EpidemicTrajectory si = evolve_si(k, {3.0, 0, 0}, s0, i0, 10.0, 41);
  CHECK(si.snapshots[0].R.size() == 0);
  for (std::size_t kk = 1; kk < si.snapshots.size(); ++kk) {
    CHECK(si.mass_s(kk) <= si.mass_s(kk - 1) + 1e-12);
    CHECK(si.mass_i(kk) >= si.mass_i(kk - 1) - 1e-12);
  }

  const EpidemicTrajectory sir = evolve_sir(k, {3.0, 1.0, 0}, s0, i0, Field::Zero(32), 10.0, 41);
  for (std::size_t kk = 1; kk < sir.snapshots.size(); ++kk) {
    CHECK(sir.mass_s(kk) <= sir.mass_s(kk - 1) + 1e-12);
    CHECK(sir.mass_r(kk) >= sir.mass_r(kk - 1) - 1e-12);
    CHECK(std::abs(sir.total_mass(kk) - sir.total_mass(0)) <= 1e-10 * sir.total_mass(0));
  }
}

TEST_CASE("no infection without infectives") {
  const Grid g = build_uniform_grid_1d(0, 1, 16);
  const KernelData k = build_kernel(g, oracle::random_kernel(16, 9));
  const Field s0 = oracle::random_field(16, 1);
  const EpidemicTrajectory tr = evolve_sir(k, {5.0, 1.0, 0}, s0, Field::Zero(16),
                                           Field::Zero(16), 3.0, 4);
  for (const auto& snap : tr.snapshots) {
    CHECK(snap.I.isZero(0.0));
    CHECK(snap.R.isZero(0.0));
  }
}

TEST_CASE("SI steady states") {
  const Grid g = build_uniform_grid_1d(0, 1, 20);
  const KernelData k = build_kernel(g, oracle::random_kernel(20, 11));
  const SiSteadyStates st = si_steady_states(k, 2.0, 1.5);
  CHECK(st.s_ray_residual <= 1e-12);
  CHECK(st.i_ray_residual <= 1e-12);
  CHECK(st.mixed_residual > 1e-3);  // coexistence is not stationary
  CHECK(std::abs(integrate(g, st.s_ray_s) - 2.0) <= 1e-12);
  CHECK(st.s_ray_i.isZero(0.0));
  CHECK(st.i_ray_s.isZero(0.0));

  Matrix v = Matrix::Zero(20, 20);
  v.topLeftCorner(10, 10).setOnes();
  v.bottomRightCorner(10, 10).setOnes();
  CHECK(code_of([&] { si_steady_states(build_kernel(g, v), 1.0); }) == ErrorCode::NotErgodic);
}

TEST_CASE("epidemic residual vanishes at disease-free states") {
  const Grid g = build_uniform_grid_1d(0, 1, 12);
  const KernelData k = build_kernel(g, oracle::random_kernel(12, 1));
  const Field n = steady_state(k).n_star;
  const Field z = Field::Zero(12);
  for (auto m : {EpidemicModel::SI, EpidemicModel::SIR, EpidemicModel::SIRE}) {
    CHECK(epidemic_residual(k, m, {2.0, 1.0, 0.5}, 3.0 * n, z, z) <= 1e-13);
  }
  CHECK(epidemic_residual(k, EpidemicModel::SIR, {2.0, 1.0, 0.5}, n, n, z) > 0.1);
  CHECK(std::string(to_string(EpidemicModel::SIRE)) == "sire");
}

TEST_CASE("homogeneous threshold is a |Omega| / M0") {
  for (double len : {1.0, 2.0})
  for (double m0 : {1.0, 2.0, 4.0}) {
    const KernelData k = constant_kernel(build_uniform_grid_1d(0, len, 32), 0.8);
    const ThresholdResult t = sire_threshold(k, {0.0, 1.3, 0.4}, m0);
    const double expect = 1.3 * len / m0;
    CHECK(std::abs(t.r_star - expect) <= 1e-8 * expect);
    CHECK(std::abs(t.bound_at_r_star) <= 1e-8 * 1.3);
    CHECK(t.bound_at_zero <= -1.3 + 1e-12);
  }
}

TEST_CASE("threshold on random kernels") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const Grid g = build_uniform_grid_1d(0, 1, 40);
    const KernelData k = build_kernel(g, oracle::random_kernel(40, seed, 0.0, 2.0));
    const EpidemicParams p{0.0, 0.9, 0.6};
    const SireModel model(k, p, 1.5);
    const ThresholdResult t = sire_threshold(model);
    CHECK(model.linearized_bound(0.9 * t.r_star) < 0.0);
    CHECK(model.linearized_bound(1.1 * t.r_star) > 0.0);
    CHECK(std::abs(t.bound_at_r_star) <= 1e-8 * p.a_recover);
    CHECK(t.bracket_lower <= t.r_star * (1 + 1e-12));
    CHECK(t.r_star <= t.bracket_upper * (1 + 1e-12));
    CHECK(t.bound_at_zero <= -p.a_recover + 1e-10);
    // Doubling the mass halves the threshold.
    const ThresholdResult t2 = sire_threshold(k, p, 3.0);
    CHECK(t2.r_star == doctest::Approx(0.5 * t.r_star).epsilon(1e-8));
  }
}

TEST_CASE("linearized bound increases with r") {
  const Grid g = build_uniform_grid_1d(0, 1, 24);
  const SireModel model(build_kernel(g, oracle::random_kernel(24, 5)), {0.0, 1.0, 1.0}, 1.0);
  double prev = -1e300;
  for (double r = 0.0; r <= 4.0; r += 0.25) {
    const double s = model.linearized_bound(r);
    CHECK(s > prev);
    prev = s;
  }
}

TEST_CASE("endemic state on a random kernel") {
  const Grid g = build_uniform_grid_1d(0, 1, 32);
  const KernelData k = build_kernel(g, oracle::random_kernel(32, 21, 0.2, 1.8));
  const EpidemicParams base{0.0, 1.0, 0.5};
  const double m0 = 2.0;
  const SireModel model(k, base, m0);
  const double r_star = sire_threshold(model).r_star;
  for (double factor : {2.0, 10.0, 1e4}) {
    const double r = factor * r_star;
    const EndemicSolution sol = sire_endemic_state(model, r);
    REQUIRE(sol.converged);
    CHECK(sol.residual <= 1e-10);
    CHECK(sol.S_r.minCoeff() > 0);
    CHECK(sol.I_r.minCoeff() > 0);
    CHECK(sol.R_r.minCoeff() > 0);
    const Field target = m0 * model.n_star();
    CHECK(sup_norm(sol.S_r + sol.I_r + sol.R_r - target) <= 1e-10 * sup_norm(target));
    // Direct substitution into the full SIRE right-hand side.
    const EpidemicParams p{r, base.a_recover, base.b_relapse};
    const double scale = r * sup_norm(target) * sup_norm(target);
    CHECK(epidemic_residual(k, EpidemicModel::SIRE, p, sol.S_r, sol.I_r, sol.R_r) <=
          1e-9 * scale);
    // R is the relapse resolvent applied to a I.
    CHECK(sup_norm(model.recovered_from_infective(sol.I_r) - sol.R_r) <=
          1e-10 * sup_norm(target));
  }
}

TEST_CASE("endemic limit for large infection rates") {
  const Grid g = build_uniform_grid_1d(0, 1, 32);
  const KernelData k = coville_kernel(g, 2.0, 0.25, 0.1);
  const double a = 1.0, b = 0.5, m0 = 3.0;
  const EndemicSolution sol = sire_endemic_state(k, {0.0, a, b}, m0, 0.0 + 1.0);
  const SireModel model(k, {0.0, a, b}, m0);
  const double r = 1e4 * sire_threshold(model).r_star;
  const EndemicSolution big = sire_endemic_state(model, r);
  REQUIRE(big.converged);
  const Field n = m0 * model.n_star();
  CHECK(sup_norm(big.I_r - b * n / (a + b)) <= 1e-2 * m0);
  CHECK(sup_norm(big.R_r - a * n / (a + b)) <= 1e-2 * m0);
  CHECK(sol.r_star > 0.0);
}

TEST_CASE("no endemic state below the threshold") {
  const Grid g = build_uniform_grid_1d(0, 1, 20);
  const KernelData k = build_kernel(g, oracle::random_kernel(20, 3));
  const SireModel model(k, {0.0, 1.0, 0.5}, 1.0);
  const double r_star = sire_threshold(model).r_star;
  const EndemicSolution sol = sire_endemic_state(model, 0.5 * r_star);
  CHECK_FALSE(sol.converged);
  const auto upper = sire_upper_threshold(model, r_star);
  REQUIRE(upper.has_value());
  CHECK(*upper >= r_star);
}

TEST_CASE("subthreshold extinction") {
  const Grid g = build_uniform_grid_1d(0, 1, 32);
  const KernelData k = build_kernel(g, oracle::random_kernel(32, 8, 0.2, 1.8));
  const double m0 = 1.0;
  const SireModel model(k, {0.0, 1.0, 0.5}, m0);
  const double r_star = sire_threshold(model).r_star;
  const double r = 0.5 * r_star;
  const double s = model.linearized_bound(r);
  REQUIRE(s < 0);
  const Field i0 = 0.05 * model.n_star();
  const ExtinctionReport rep =
      sire_subthreshold_check(model, r, i0, Field::Zero(32), 20.0 / std::abs(s));
  CHECK(rep.sup_i_final <= 1e-4 * rep.sup_i_initial);
  CHECK(rep.susceptible_deviation <= 1e-3 * m0);
  CHECK(rep.fitted_rate >= 0.9 * std::abs(s));
  CHECK(rep.linearized_bound == doctest::Approx(s));

  CHECK(code_of([&] { sire_subthreshold_check(model, 1.5 * r_star, i0, Field::Zero(32), 1.0); }) ==
        ErrorCode::InvalidArgument);
  CHECK(code_of([&] {
          sire_subthreshold_check(model, r, 2.0 * model.n_star(), Field::Zero(32), 1.0);
        }) == ErrorCode::InvalidArgument);
}
