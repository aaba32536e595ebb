#include "migepi/ode.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "migepi/error.hpp"

namespace migepi::ode {

namespace {

// Dormand-Prince tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
// b - b_hat (embedded fourth-order weights).
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

}  // namespace

std::vector<Field> integrate(const Rhs& rhs, double t0, const Field& y0,
                             const std::vector<double>& times, const Options& opts,
                             Stats* stats) {
  Stats local;
  Stats& st = stats ? *stats : local;
  std::vector<Field> out;
  out.reserve(times.size());
  if (times.empty()) return out;
  if (!std::is_sorted(times.begin(), times.end()) || times.front() < t0) {
    fail(ErrorCode::InvalidArgument, "output times must be ascending and not before t0");
  }

  const Eigen::Index n = y0.size();
  Field y = y0;
  double t = t0;
  Field k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), y_new(n), err(n);
  rhs(t, y, k1);
  ++st.rhs_calls;

  const double span = std::max(times.back() - t0, 1e-300);
  double h = opts.initial_step;
  if (h <= 0.0) {
    const double scale = opts.atol + opts.rtol * y.cwiseAbs().maxCoeff();
    const double d0 = y.cwiseAbs().maxCoeff() / scale;
    const double d1 = k1.cwiseAbs().maxCoeff() / scale;
    h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 * span : 0.01 * d0 / d1;
    h = std::min(h, span);
  }
  const double h_min = opts.min_step * span;

  for (double target : times) {
    while (t < target) {
      if (st.accepted + st.rejected >= opts.max_steps) {
        fail(ErrorCode::StepFailure, "step budget exhausted at t=" + std::to_string(t));
      }
      bool last = false;
      double step = h;
      if (t + step >= target) {
        step = target - t;
        last = true;
      }
      tmp = y + step * a21 * k1;
      rhs(t + c2 * step, tmp, k2);
      tmp = y + step * (a31 * k1 + a32 * k2);
      rhs(t + c3 * step, tmp, k3);
      tmp = y + step * (a41 * k1 + a42 * k2 + a43 * k3);
      rhs(t + c4 * step, tmp, k4);
      tmp = y + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
      rhs(t + c5 * step, tmp, k5);
      tmp = y + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
      rhs(t + step, tmp, k6);
      y_new = y + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      rhs(t + step, y_new, k7);
      st.rhs_calls += 6;
      err = step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

      double err_norm = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double sc = opts.atol + opts.rtol * std::max(std::abs(y[i]), std::abs(y_new[i]));
        err_norm = std::max(err_norm, std::abs(err[i]) / sc);
      }
      if (!std::isfinite(err_norm) || !y_new.allFinite()) {
        fail(ErrorCode::NonFinite, "non-finite state at t=" + std::to_string(t));
      }

      const double factor =
          err_norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
      if (err_norm <= 1.0) {
        t = last ? target : t + step;
        y.swap(y_new);
        k1.swap(k7);
        ++st.accepted;
        // A step clipped to an output time keeps the natural step size.
        if (!last) {
          h = step * factor;
        } else if (factor < 1.0) {
          h = std::min(h, step * factor);
        }
      } else {
        ++st.rejected;
        h = step * std::max(factor, 0.2);
        if (h < h_min) {
          fail(ErrorCode::StepFailure, "step size underflow at t=" + std::to_string(t));
        }
      }
    }
    out.push_back(y);
  }
  return out;
}

}  // namespace migepi::ode
