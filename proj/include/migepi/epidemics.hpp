#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "migepi/dynamics.hpp"
#include "migepi/ode.hpp"

namespace migepi {

struct EpidemicParams {
  double r_infect = 0.0;   // infection rate, per density per time
  double a_recover = 0.0;  // recovery rate
  double b_relapse = 0.0;  // loss of immunity rate (SIRE)
};

enum class EpidemicModel { SI, SIR, SIRE };

const char* to_string(EpidemicModel m) noexcept;

/// R is empty for the SI model.
struct EpidemicState {
  double time = 0.0;
  Field S;
  Field I;
  Field R;

  Field total() const { return R.size() ? Field(S + I + R) : Field(S + I); }
};

struct EpidemicTrajectory {
  EpidemicModel model = EpidemicModel::SI;
  Field weights;
  std::vector<EpidemicState> snapshots;
  ode::Stats stats;

  double mass_s(std::size_t k) const { return weights.dot(snapshots[k].S); }
  double mass_i(std::size_t k) const { return weights.dot(snapshots[k].I); }
  double mass_r(std::size_t k) const {
    return snapshots[k].R.size() ? weights.dot(snapshots[k].R) : 0.0;
  }
  double total_mass(std::size_t k) const { return mass_s(k) + mass_i(k) + mass_r(k); }
};

struct EpidemicOptions {
  double rtol = 1e-8;
  double atol_rel = 1e-12;     // absolute tolerance is atol_rel * M0
  double positivity_tol = 1e-12;  // relative undershoot allowed before failing
};

/// Throws NegativeValue for negative inputs or an undershoot below
/// -positivity_tol * scale at a snapshot, StepFailure from the integrator.
EpidemicTrajectory evolve_si(const KernelData& k, const EpidemicParams& p, const Field& s0,
                             const Field& i0, double t_final, std::size_t n_snapshots,
                             const EpidemicOptions& opts = {});

EpidemicTrajectory evolve_sir(const KernelData& k, const EpidemicParams& p, const Field& s0,
                              const Field& i0, const Field& r0, double t_final,
                              std::size_t n_snapshots, const EpidemicOptions& opts = {});

EpidemicTrajectory evolve_sire(const KernelData& k, const EpidemicParams& p, const Field& s0,
                               const Field& i0, const Field& r0, double t_final,
                               std::size_t n_snapshots, const EpidemicOptions& opts = {});

/// Sup norm of the right-hand sides of the model at a state (zero at a
/// steady state). R is ignored for SI.
double epidemic_residual(const KernelData& k, EpidemicModel model, const EpidemicParams& p,
                         const Field& S, const Field& I, const Field& R);

struct SiSteadyStates {
  Field n_star;
  Field s_ray_s, s_ray_i;  // (M0 N*, 0)
  Field i_ray_s, i_ray_i;  // (0, M0 N*)
  double s_ray_residual = 0.0;
  double i_ray_residual = 0.0;
  double mixed_residual = 0.0;  // N* split between S and I by cell halves
};

/// Throws NotErgodic.
SiSteadyStates si_steady_states(const KernelData& k, double m0, double r_infect = 1.0);

/// Disease-free linearization of the SIRE model around (M0 N*, 0, 0):
/// A_r = H - a I + r M0 diag(N*).
class SireModel {
 public:
  /// Throws NotErgodic, InvalidArgument when a or b is not positive.
  SireModel(const KernelData& k, const EpidemicParams& p, double m0,
            const SpectralOptions& spectral = {});

  const KernelData& kernel() const noexcept { return *kernel_; }
  const EpidemicParams& params() const noexcept { return params_; }
  double m0() const noexcept { return m0_; }
  const Field& n_star() const noexcept { return n_star_; }
  const Matrix& generator() const noexcept { return h0_; }

  Matrix linearization(double r) const;
  double linearized_bound(double r) const;

  /// R = a L_b I with L_b = (b - H)^{-1}.
  Field recovered_from_infective(const Field& infective) const;
  /// Cached factorization of b - H.
  const Resolvent& relapse_resolvent() const noexcept { return *lb_; }

  /// Steady-state system residuals (I equation, R equation) for the reduced
  /// system with N = M0 N*.
  std::array<double, 2> reduced_residual(double r, const Field& I, const Field& R) const;

 private:
  std::shared_ptr<const KernelData> kernel_;
  EpidemicParams params_;
  double m0_;
  SpectralOptions spectral_;
  Field n_star_;
  Matrix h0_;
  std::shared_ptr<const Resolvent> lb_;
};

struct ThresholdResult {
  double r_star = 0.0;
  double bound_at_r_star = 0.0;   // s(A_{r_star})
  double bracket_lower = 0.0;     // a / (M0 max N*)
  double bracket_upper = 0.0;     // a / (M0 min N*)
  double bound_at_zero = 0.0;     // s(A_0)
  int iterations = 0;
};

/// Bisection on the increasing map r -> s(A_r). Throws BracketFailure.
ThresholdResult sire_threshold(const SireModel& model);
ThresholdResult sire_threshold(const KernelData& k, const EpidemicParams& p, double m0);

struct EndemicSolution {
  double r = 0.0;
  double r_star = 0.0;
  std::optional<double> r_star_upper;
  Field I_r, R_r, S_r;
  double residual = 0.0;  // sup residual relative to the size of the terms
  bool converged = false;
  int iterations = 0;
  std::string diagnostics;
};

struct NewtonOptions {
  int max_iterations = 100;
  int max_halvings = 30;
  double tol = 1e-10;
};

/// Damped Newton iteration on the scalar equation for I started from
/// b M0 N* / (a + b). Steps are shortened until the iterate stays positive.
EndemicSolution sire_endemic_state(const SireModel& model, double r,
                                   const NewtonOptions& opts = {});
EndemicSolution sire_endemic_state(const KernelData& k, const EpidemicParams& p, double m0,
                                   double r, const NewtonOptions& opts = {});

/// Smallest r in r_star * 2^k, k = 0..max_doublings, at which the Newton
/// iteration converges to a positive solution.
std::optional<double> sire_upper_threshold(const SireModel& model, double r_star,
                                           int max_doublings = 40);

struct ExtinctionReport {
  double r = 0.0;
  double r_star = 0.0;
  double linearized_bound = 0.0;  // s(A_r) < 0
  double sup_i_initial = 0.0, sup_i_final = 0.0;
  double sup_r_initial = 0.0, sup_r_final = 0.0;
  double susceptible_deviation = 0.0;  // sup |S(T) - M0 N*|
  double fitted_rate = 0.0;            // decay rate of sup I
  std::vector<double> times;
  std::vector<double> sup_i;
  std::vector<double> sup_r;
};

/// Evolves the reduced (I, R) system with N = M0 N*, i.e. S = M0 N* - I - R.
/// Throws InvalidArgument unless 0 < r < r_star and I0 + R0 <= M0 N*.
ExtinctionReport sire_subthreshold_check(const SireModel& model, double r, const Field& i0,
                                         const Field& r0, double t_final,
                                         std::size_t n_snapshots = 201,
                                         const EpidemicOptions& opts = {});

}  // namespace migepi
