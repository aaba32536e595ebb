#include "migepi/epidemics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include <spdlog/spdlog.h>

#include "migepi/error.hpp"
#include "migepi/linalg.hpp"

namespace migepi {

const char* to_string(EpidemicModel m) noexcept {
  switch (m) {
    case EpidemicModel::SI: return "si";
    case EpidemicModel::SIR: return "sir";
    case EpidemicModel::SIRE: return "sire";
  }
  return "?";
}

namespace {

void check_field(const Field& f, std::size_t n, const char* name) {
  if (static_cast<std::size_t>(f.size()) != n) {
    fail(ErrorCode::DimensionMismatch, std::string(name) + " has " + std::to_string(f.size()) +
                                           " entries, expected " + std::to_string(n));
  }
  if (!f.allFinite()) fail(ErrorCode::NonFinite, std::string(name) + " is not finite");
  if ((f.array() < 0.0).any()) fail(ErrorCode::NegativeValue, std::string(name) + " is negative");
}

void check_params(EpidemicModel model, const EpidemicParams& p) {
  if (!std::isfinite(p.r_infect) || !std::isfinite(p.a_recover) || !std::isfinite(p.b_relapse)) {
    fail(ErrorCode::NonFinite, "epidemic rates must be finite");
  }
  if (p.r_infect < 0.0 || p.a_recover < 0.0 || p.b_relapse < 0.0) {
    fail(ErrorCode::NegativeValue, "epidemic rates must be nonnegative");
  }
  if (model != EpidemicModel::SI && !(p.a_recover > 0.0)) {
    fail(ErrorCode::InvalidArgument, "recovery rate a must be positive");
  }
  if (model == EpidemicModel::SIRE && !(p.b_relapse > 0.0)) {
    fail(ErrorCode::InvalidArgument, "immunity-loss rate b must be positive");
  }
}

// Right-hand side of the three models; the migration part is h * field.
struct EpidemicRhs {
  const Matrix* h;
  EpidemicModel model;
  EpidemicParams p;
  Eigen::Index n;

  void operator()(double, const Field& y, Field& dy) const {
    const auto S = y.segment(0, n);
    const auto I = y.segment(n, n);
    const Field infection = p.r_infect * S.cwiseProduct(I);
    dy.segment(0, n).noalias() = *h * S;
    dy.segment(n, n).noalias() = *h * I;
    dy.segment(0, n) -= infection;
    dy.segment(n, n) += infection;
    if (model == EpidemicModel::SI) return;
    const auto R = y.segment(2 * n, n);
    dy.segment(2 * n, n).noalias() = *h * R;
    dy.segment(n, n) -= p.a_recover * I;
    dy.segment(2 * n, n) += p.a_recover * I;
    if (model == EpidemicModel::SIRE) {
      dy.segment(2 * n, n) -= p.b_relapse * R;
      dy.segment(0, n) += p.b_relapse * R;
    }
  }
};

EpidemicTrajectory evolve_model(const KernelData& k, EpidemicModel model,
                                const EpidemicParams& p, const Field& s0, const Field& i0,
                                const Field* r0, double t_final, std::size_t n_snapshots,
                                const EpidemicOptions& opts) {
  check_params(model, p);
  const std::size_t n = k.size();
  check_field(s0, n, "S0");
  check_field(i0, n, "I0");
  if (r0) check_field(*r0, n, "R0");
  const std::vector<double> times = snapshot_times(t_final, n_snapshots);

  const Matrix h = build_generator(k).h;
  const auto nn = static_cast<Eigen::Index>(n);
  const Eigen::Index comps = model == EpidemicModel::SI ? 2 : 3;
  Field y0(comps * nn);
  y0.segment(0, nn) = s0;
  y0.segment(nn, nn) = i0;
  if (comps == 3) y0.segment(2 * nn, nn) = *r0;

  const Field& w = k.grid().weights();
  Field total0 = s0 + i0;
  if (r0) total0 += *r0;
  const double m0 = w.dot(total0);
  const double scale = std::max(sup_norm(total0), std::numeric_limits<double>::min());

  ode::Options o;
  o.rtol = opts.rtol;
  o.atol = opts.atol_rel * std::max(m0, std::numeric_limits<double>::min());
  EpidemicRhs rhs{&h, model, p, nn};

  EpidemicTrajectory traj;
  traj.model = model;
  traj.weights = w;
  const std::vector<Field> states = ode::integrate(
      [&rhs](double t, const Field& y, Field& dy) { rhs(t, y, dy); }, 0.0, y0, times, o,
      &traj.stats);

  traj.snapshots.reserve(states.size());
  for (std::size_t kk = 0; kk < states.size(); ++kk) {
    const Field& y = states[kk];
    if (y.minCoeff() < -opts.positivity_tol * scale) {
      fail(ErrorCode::NegativeValue,
           "component undershoots zero by " + std::to_string(-y.minCoeff()) + " at t=" +
               std::to_string(times[kk]));
    }
    EpidemicState st;
    st.time = times[kk];
    st.S = y.segment(0, nn);
    st.I = y.segment(nn, nn);
    if (comps == 3) st.R = y.segment(2 * nn, nn);
    traj.snapshots.push_back(std::move(st));
  }
  spdlog::debug("{} run: {} accepted steps, {} rejected", to_string(model),
                traj.stats.accepted, traj.stats.rejected);
  return traj;
}

}  // namespace

EpidemicTrajectory evolve_si(const KernelData& k, const EpidemicParams& p, const Field& s0,
                             const Field& i0, double t_final, std::size_t n_snapshots,
                             const EpidemicOptions& opts) {
  return evolve_model(k, EpidemicModel::SI, p, s0, i0, nullptr, t_final, n_snapshots, opts);
}

EpidemicTrajectory evolve_sir(const KernelData& k, const EpidemicParams& p, const Field& s0,
                              const Field& i0, const Field& r0, double t_final,
                              std::size_t n_snapshots, const EpidemicOptions& opts) {
  return evolve_model(k, EpidemicModel::SIR, p, s0, i0, &r0, t_final, n_snapshots, opts);
}

EpidemicTrajectory evolve_sire(const KernelData& k, const EpidemicParams& p, const Field& s0,
                               const Field& i0, const Field& r0, double t_final,
                               std::size_t n_snapshots, const EpidemicOptions& opts) {
  return evolve_model(k, EpidemicModel::SIRE, p, s0, i0, &r0, t_final, n_snapshots, opts);
}

double epidemic_residual(const KernelData& k, EpidemicModel model, const EpidemicParams& p,
                         const Field& S, const Field& I, const Field& R) {
  const Matrix h = build_generator(k).h;
  const auto n = static_cast<Eigen::Index>(k.size());
  const Eigen::Index comps = model == EpidemicModel::SI ? 2 : 3;
  Field y(comps * n), dy(comps * n);
  y.segment(0, n) = S;
  y.segment(n, n) = I;
  if (comps == 3) y.segment(2 * n, n) = R;
  EpidemicRhs{&h, model, p, n}(0.0, y, dy);
  return sup_norm(dy);
}

SiSteadyStates si_steady_states(const KernelData& k, double m0, double r_infect) {
  const SpectralSummary ss = steady_state(k);
  const auto n = static_cast<Eigen::Index>(k.size());
  const EpidemicParams p{r_infect, 0.0, 0.0};
  SiSteadyStates out;
  out.n_star = ss.n_star;
  const Field ray = m0 * ss.n_star;
  const Field zero = Field::Zero(n);
  out.s_ray_s = ray;
  out.s_ray_i = zero;
  out.i_ray_s = zero;
  out.i_ray_i = ray;
  out.s_ray_residual = epidemic_residual(k, EpidemicModel::SI, p, ray, zero, Field());
  out.i_ray_residual = epidemic_residual(k, EpidemicModel::SI, p, zero, ray, Field());

  Field mixed_s = Field::Zero(n), mixed_i = Field::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    (i < n / 2 ? mixed_s : mixed_i)[i] = ray[i];
  }
  out.mixed_residual = epidemic_residual(k, EpidemicModel::SI, p, mixed_s, mixed_i, Field());
  return out;
}

SireModel::SireModel(const KernelData& k, const EpidemicParams& p, double m0,
                     const SpectralOptions& spectral)
    : kernel_(std::make_shared<const KernelData>(k)), params_(p), m0_(m0), spectral_(spectral) {
  check_params(EpidemicModel::SIRE, p);
  if (!(m0 > 0.0)) fail(ErrorCode::InvalidArgument, "total mass M0 must be positive");
  n_star_ = steady_state(*kernel_, spectral_).n_star;
  h0_ = build_generator(*kernel_).h;
  lb_ = std::make_shared<const Resolvent>(h0_, p.b_relapse);
}

Matrix SireModel::linearization(double r) const {
  Matrix a = h0_;
  a.diagonal().array() += r * m0_ * n_star_.array() - params_.a_recover;
  return a;
}

double SireModel::linearized_bound(double r) const {
  const Matrix a = linearization(r);
  const bool dense = spectral_.method == EigenMethod::Dense ||
                     (spectral_.method == EigenMethod::Auto &&
                      kernel_->size() <= spectral_.dense_limit);
  if (dense) return max_real_eigenvalue(a);
  return linalg::metzler_power_iteration(a, spectral_.seed, spectral_.power_tol).eigenvalue;
}

Field SireModel::recovered_from_infective(const Field& infective) const {
  return params_.a_recover * lb_->solve(infective);
}

std::array<double, 2> SireModel::reduced_residual(double r, const Field& I,
                                                  const Field& R) const {
  const Field eq_i = h0_ * I - params_.a_recover * I + r * m0_ * n_star_.cwiseProduct(I) -
                     r * I.cwiseProduct(I) - r * I.cwiseProduct(R);
  const Field eq_r = h0_ * R - params_.b_relapse * R + params_.a_recover * I;
  return {sup_norm(eq_i), sup_norm(eq_r)};
}

ThresholdResult sire_threshold(const SireModel& model) {
  const double a = model.params().a_recover;
  const double m0 = model.m0();
  const Field& ns = model.n_star();
  ThresholdResult res;
  res.bracket_lower = a / (m0 * ns.maxCoeff());
  res.bracket_upper = a / (m0 * ns.minCoeff());
  res.bound_at_zero = model.linearized_bound(0.0);

  double lo = res.bracket_lower;
  double hi = res.bracket_upper;
  double s_lo = model.linearized_bound(lo);
  double s_hi = model.linearized_bound(hi);
  if (s_lo > 1e-10 * a) {
    spdlog::warn("s(A_r) > 0 at the lower bracket; restarting bisection from r = 0");
    lo = 0.0;
    s_lo = res.bound_at_zero;
  }
  const double tol = 1e-10 * a;
  const double hi_limit = 1e6 * res.bracket_upper;
  while (s_hi < -tol) {
    spdlog::warn("s(A_r) < 0 at r = {}; expanding the upper bracket", hi);
    hi *= 2.0;
    if (hi > hi_limit) {
      fail(ErrorCode::BracketFailure, "s(A_r) does not cross zero below 1e6 a / (M0 min N*)");
    }
    s_hi = model.linearized_bound(hi);
  }

  double mid = 0.5 * (lo + hi);
  double s_mid = model.linearized_bound(mid);
  for (res.iterations = 1; res.iterations < 200; ++res.iterations) {
    if (std::abs(s_mid) <= tol || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) {
      break;
    }
    if (s_mid < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    mid = 0.5 * (lo + hi);
    s_mid = model.linearized_bound(mid);
  }
  res.r_star = mid;
  res.bound_at_r_star = s_mid;
  return res;
}

ThresholdResult sire_threshold(const KernelData& k, const EpidemicParams& p, double m0) {
  return sire_threshold(SireModel(k, p, m0));
}

EndemicSolution sire_endemic_state(const SireModel& model, double r, const NewtonOptions& opts) {
  const EpidemicParams& p = model.params();
  const double a = p.a_recover, b = p.b_relapse, m0 = model.m0();
  const Matrix& h = model.generator();
  const Field base = m0 * model.n_star();
  const auto n = h.rows();

  EndemicSolution sol;
  sol.r = r;
  // L_b as a dense operator for the Jacobian: columns L_b e_j.
  const Matrix lb = model.relapse_resolvent().solve_columns(Matrix::Identity(n, n));

  // Scaled residual F(I) / r; the scale is the size of the largest term.
  const double term_scale =
      std::max({(model.kernel().emigration().maxCoeff() + a) / r + sup_norm(base), b / r,
                std::numeric_limits<double>::min()}) *
      sup_norm(base);
  auto residual = [&](const Field& I) -> Field {
    const Field lbi = lb * I;
    return (h * I - a * I) / r + base.cwiseProduct(I) - I.cwiseProduct(I + a * lbi);
  };

  Field I = b * base / (a + b);
  Field F = residual(I);
  double fnorm = sup_norm(F);
  std::ostringstream diag;
  for (sol.iterations = 0; sol.iterations < opts.max_iterations; ++sol.iterations) {
    if (fnorm <= opts.tol * term_scale) break;
    const Field lbi = lb * I;
    Matrix jac = h / r;
    jac.diagonal().array() += (-a / r) + base.array() - 2.0 * I.array() - a * lbi.array();
    jac.noalias() -= a * I.asDiagonal() * lb;
    const Field step = jac.partialPivLu().solve(-F);
    double t = 1.0;
    bool accepted = false;
    for (int halving = 0; halving <= opts.max_halvings; ++halving, t *= 0.5) {
      const Field trial = I + t * step;
      if ((trial.array() <= 0.0).any()) continue;
      const Field f_trial = residual(trial);
      const double fn = sup_norm(f_trial);
      if (fn < fnorm || fn <= opts.tol * term_scale) {
        I = trial;
        F = f_trial;
        fnorm = fn;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      diag << "no positive descent step after " << opts.max_halvings << " halvings at iteration "
           << sol.iterations << "; ";
      break;
    }
  }

  sol.I_r = I;
  sol.R_r = model.recovered_from_infective(I);
  sol.S_r = base - sol.I_r - sol.R_r;
  sol.residual = fnorm / term_scale;
  const double floor = 1e-10 * sup_norm(base);
  const bool positive = sol.I_r.minCoeff() > floor && sol.R_r.minCoeff() > floor &&
                        sol.S_r.minCoeff() > floor;
  sol.converged = sol.residual <= opts.tol && positive;
  if (!positive) diag << "solution is not strictly positive (min I = " << sol.I_r.minCoeff() << "); ";
  if (sol.residual > opts.tol) diag << "relative residual " << sol.residual << "; ";
  sol.diagnostics = diag.str();
  return sol;
}

EndemicSolution sire_endemic_state(const KernelData& k, const EpidemicParams& p, double m0,
                                   double r, const NewtonOptions& opts) {
  const SireModel model(k, p, m0);
  EndemicSolution sol = sire_endemic_state(model, r, opts);
  sol.r_star = sire_threshold(model).r_star;
  return sol;
}

std::optional<double> sire_upper_threshold(const SireModel& model, double r_star,
                                           int max_doublings) {
  double r = r_star;
  for (int kk = 0; kk <= max_doublings; ++kk, r *= 2.0) {
    if (sire_endemic_state(model, r).converged) return r;
  }
  return std::nullopt;
}

ExtinctionReport sire_subthreshold_check(const SireModel& model, double r, const Field& i0,
                                         const Field& r0, double t_final,
                                         std::size_t n_snapshots, const EpidemicOptions& opts) {
  const std::size_t n = model.kernel().size();
  check_field(i0, n, "I0");
  check_field(r0, n, "R0");
  ExtinctionReport rep;
  rep.r = r;
  rep.r_star = sire_threshold(model).r_star;
  if (!(r > 0.0 && r < rep.r_star)) {
    fail(ErrorCode::InvalidArgument, "subthreshold check needs 0 < r < r* = " +
                                         std::to_string(rep.r_star));
  }
  const Field base = model.m0() * model.n_star();
  const Field s0 = base - i0 - r0;
  if (s0.minCoeff() < 0.0) {
    fail(ErrorCode::InvalidArgument, "I0 + R0 exceeds M0 N* somewhere");
  }
  rep.linearized_bound = model.linearized_bound(r);

  EpidemicParams p = model.params();
  p.r_infect = r;
  const Matrix& h = model.generator();
  const auto nn = static_cast<Eigen::Index>(n);
  // Reduced system: S eliminated through S = M0 N* - I - R.
  auto rhs = [&](double, const Field& y, Field& dy) {
    const auto I = y.segment(0, nn);
    const auto R = y.segment(nn, nn);
    dy.segment(0, nn).noalias() = h * I;
    dy.segment(nn, nn).noalias() = h * R;
    dy.segment(0, nn) += (r * (base - I - R) - Field::Constant(nn, p.a_recover)).cwiseProduct(I);
    dy.segment(nn, nn) += p.a_recover * I - p.b_relapse * R;
  };
  Field y0(2 * nn);
  y0 << i0, r0;
  rep.times = snapshot_times(t_final, n_snapshots);
  ode::Options o;
  o.rtol = opts.rtol;
  o.atol = opts.atol_rel * model.m0();
  const std::vector<Field> states = ode::integrate(rhs, 0.0, y0, rep.times, o);
  const double scale = sup_norm(base);
  for (const Field& y : states) {
    if (y.minCoeff() < -opts.positivity_tol * scale) {
      fail(ErrorCode::NegativeValue, "reduced SIRE state undershoots zero");
    }
    rep.sup_i.push_back(sup_norm(y.segment(0, nn)));
    rep.sup_r.push_back(sup_norm(y.segment(nn, nn)));
  }
  rep.sup_i_initial = rep.sup_i.front();
  rep.sup_i_final = rep.sup_i.back();
  rep.sup_r_initial = rep.sup_r.front();
  rep.sup_r_final = rep.sup_r.back();
  const Field& yf = states.back();
  rep.susceptible_deviation = sup_norm(yf.segment(0, nn) + yf.segment(nn, nn));

  // Log-linear fit of sup I over the last 80% of the window, stopping at
  // the integrator's absolute tolerance.
  if (rep.sup_i_initial == 0.0) {
    rep.fitted_rate = std::numeric_limits<double>::infinity();
    return rep;
  }
  const double floor = 1e3 * o.atol;
  double st = 0, sy = 0, stt = 0, sty = 0, cnt = 0;
  for (std::size_t kk = 0; kk < rep.times.size(); ++kk) {
    if (rep.times[kk] < 0.2 * t_final || rep.sup_i[kk] <= floor) continue;
    const double t = rep.times[kk], yv = std::log(rep.sup_i[kk]);
    st += t;
    sy += yv;
    stt += t * t;
    sty += t * yv;
    cnt += 1;
  }
  if (cnt >= 2) {
    rep.fitted_rate = -(cnt * sty - st * sy) / (cnt * stt - st * st);
  } else {
    rep.fitted_rate = std::numeric_limits<double>::infinity();
  }
  return rep;
}

}  // namespace migepi
