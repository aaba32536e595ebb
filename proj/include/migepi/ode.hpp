#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "migepi/grid.hpp"

namespace migepi::ode {

using Rhs = std::function<void(double t, const Field& y, Field& dydt)>;

struct Options {
  double rtol = 1e-8;
  double atol = 1e-12;
  double initial_step = 0.0;  // 0 picks a step from the rhs norm
  double min_step = 1e-14;    // relative to the integration span
  std::size_t max_steps = 50'000'000;
};

struct Stats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_calls = 0;
};

/// Dormand-Prince 5(4) with local extrapolation and max-norm error control.
/// Returns the state at every requested time (ascending, starting at or after
/// t0); integration steps are clipped to land on them exactly. Throws
/// StepFailure if the step size underflows or the step budget is exhausted,
/// NonFinite if the state blows up.
std::vector<Field> integrate(const Rhs& rhs, double t0, const Field& y0,
                             const std::vector<double>& times, const Options& opts = {},
                             Stats* stats = nullptr);

}  // namespace migepi::ode
