#include <cmath>

#include "doctest.h"
#include "migepi/error.hpp"
#include "migepi/ode.hpp"

using namespace migepi;

TEST_CASE("exponential decay lands on the output times") {
  const std::vector<double> times = {0.0, 0.5, 1.0, 3.0, 10.0};
  ode::Stats st;
  const auto ys = ode::integrate([](double, const Field& y, Field& dy) { dy = -2.0 * y; }, 0.0,
                                 Field::Ones(1), times, {1e-10, 1e-14}, &st);
  REQUIRE(ys.size() == times.size());
  for (std::size_t k = 0; k < times.size(); ++k) {
    CHECK(ys[k][0] == doctest::Approx(std::exp(-2.0 * times[k])).epsilon(1e-8));
  }
  CHECK(st.accepted > 0);
}

TEST_CASE("harmonic oscillator keeps its phase") {
  ode::Options o;
  o.rtol = 1e-10;
  o.atol = 1e-12;
  const auto ys = ode::integrate(
      [](double, const Field& y, Field& dy) {
        dy[0] = y[1];
        dy[1] = -y[0];
      },
      0.0, (Field(2) << 1.0, 0.0).finished(), {2 * M_PI * 5}, o);
  CHECK(std::abs(ys[0][0] - 1.0) <= 1e-7);
  CHECK(std::abs(ys[0][1]) <= 1e-7);
}

TEST_CASE("time-dependent right-hand side") {
  const auto ys = ode::integrate([](double t, const Field&, Field& dy) { dy[0] = std::cos(t); },
                                 0.0, Field::Zero(1), {1.0, 2.0});
  CHECK(ys[1][0] == doctest::Approx(std::sin(2.0)).epsilon(1e-7));
}

TEST_CASE("integrator errors") {
  auto rhs = [](double, const Field& y, Field& dy) { dy = y.cwiseProduct(y); };
  CHECK_THROWS_AS(ode::integrate(rhs, 0.0, Field::Ones(1), {1.0, 0.5}), Error);
  try {
    ode::integrate(rhs, 0.0, Field::Ones(1), {2.0});
    FAIL("blow-up not detected");
  } catch (const Error& e) {
    CHECK((e.code() == ErrorCode::StepFailure || e.code() == ErrorCode::NonFinite));
  }
}
