#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "migepi/spectral.hpp"

namespace migepi {

struct PopulationField {
  double time = 0.0;
  Field values;
};

struct Trajectory {
  Field weights;  // quadrature weights of the grid the fields live on
  std::vector<PopulationField> snapshots;

  double mass(std::size_t k) const { return weights.dot(snapshots[k].values); }
};

/// Evenly spaced snapshot times including 0 and t_final.
std::vector<double> snapshot_times(double t_final, std::size_t n_snapshots);

/// Exact-in-time evolution of N' = h N: one matrix exponential of h * dt,
/// applied once per snapshot interval.
Trajectory evolve_linear(const GeneratorMatrix& g, const Field& n0, double t_final,
                         std::size_t n_snapshots);

// Closed-form solutions, all evaluated with the discrete (quadrature) masses
// so that they are exact solutions of the discretized equation.

/// v == c: N0 e^{-c t |Omega|} + (M0 / |Omega|)(1 - e^{-c t |Omega|}).
Field closed_form_homogeneous(const Grid& grid, double c, const Field& n0, double t);

/// v(x, y) = v(x): N0 e^{-a t} + M0 v (1 - e^{-a t}) / a with a = int v.
Field closed_form_destination_only(const Grid& grid, const Field& v, const Field& n0,
                                   double t);

/// Two-piece semi-constant kernel: v(x, y) = v1(x) for y in block 0 and
/// v2(x) for y in block 1.
struct TwoPieceParams {
  Field v1;
  Field v2;
  std::vector<std::size_t> blocks;  // 0 or 1 per cell
};

struct TwoPieceCoefficients {
  double a11 = 0, a12 = 0, a21 = 0, a22 = 0;
  double b1 = 0, b2 = 0;
};

TwoPieceCoefficients two_piece_coefficients(const Grid& grid, const TwoPieceParams& p);

/// Block masses (y1, y2) at time t from the exponential two-state solution.
std::array<double, 2> two_piece_block_masses(const Grid& grid, const TwoPieceParams& p,
                                             const Field& n0, double t);

/// Field at time t from the variation-of-constants formula driven by the
/// block masses. Throws InvalidArgument when v1 vanishes somewhere on block 1
/// or v2 somewhere on block 0.
Field closed_form_two_piece(const Grid& grid, const TwoPieceParams& p, const Field& n0,
                            double t);

/// Limit profile (a12 v1 + a21 v2) / ((a12 + a21) v_e), unit mass.
Field two_piece_steady_state(const Grid& grid, const TwoPieceParams& p);

/// Reduction of a piecewise semi-constant kernel to its block-mass ODE
/// y' = (A - B) y.
struct BlockReduction {
  std::vector<std::vector<std::size_t>> blocks;  // cells per block
  Matrix a;          // a(j, k) = mass in block j of the profile of block k
  Field b;           // column sums of a
  Field xi;          // Perron vector of A - B, sums to 1
  double kappa_block = 0.0;
  Field y0;          // initial block masses

  Matrix generator() const;
  /// Block masses at time t from the matrix exponential of (A - B) t.
  Field masses_at(double t) const;
  /// z(t) = y(t) - c xi with c = sum y0.
  Field deviation_at(double t) const;
};

/// block_of[i] is the block of cell i; blocks are numbered 0..m-1 and all
/// nonempty. Throws NotSemiConstant or ReducibleBlocks.
BlockReduction n_piece_reduce(const KernelData& k, const std::vector<std::size_t>& block_of,
                              const Field& n0);

/// Steady profile v_e^{-1} sum_k xi_k v_k(x) of a reduced kernel.
Field n_piece_steady_state(const KernelData& k, const BlockReduction& red);

struct SeparableComponent {
  std::vector<std::size_t> cells;
  Field n_star;     // full-length, zero off the component, unit mass on it
  double mass = 0;  // initial mass in the component
};

struct NonergodicReport {
  ErgodicClass classification = ErgodicClass::Other;
  Field limit_field;          // predicted t -> infinity limit
  Trajectory trajectory;      // evolution up to t_final (two snapshots)
  double final_deviation = 0; // sup |N(t_final) - limit_field|
  double initial_mass = 0;
  double final_mass = 0;

  // separable
  std::vector<SeparableComponent> components;

  // one_way
  std::vector<std::size_t> upstream;    // source component, drained over time
  std::vector<std::size_t> absorbing;   // sink component
  double upstream_decay_rate = 0;       // -s of the upstream sub-generator
  double min_upstream_leak = 0;         // inf over upstream cells of v_e^{21}
  double upstream_sup_initial = 0;
  double upstream_sup_final = 0;
};

/// Throws WrongClassification unless the kernel is separable or one-way.
NonergodicReport analyze_nonergodic(const KernelData& k, const Field& n0, double t_final,
                                    std::size_t n_snapshots = 2);

enum class DeviationNorm { Sup, L1 };

/// The decaying field is N(t) e^{-growth_rate t} - field.
struct DecayReference {
  Field field;
  double growth_rate = 0.0;
};

struct DecayFitOptions {
  DeviationNorm norm = DeviationNorm::Sup;
  double discard_fraction = 0.2;   // leading part of the time window ignored
  double converged_floor = 1e-13;  // relative to the reference scale
  double noise_floor = 1e-11;      // tail points below this are dropped
};

struct DecayFit {
  double kappa_hat = 0.0;
  double prefactor_hat = 0.0;
  double residual = 0.0;  // rms of the log-linear fit
  double t_begin = 0.0;
  double t_end = 0.0;
  std::size_t points = 0;
};

/// Least-squares fit of log ||deviation(t)|| = log C - kappa t.
/// Throws AlreadyConverged, NonMonotone or InvalidArgument (< 4 points).
DecayFit fit_decay(const Trajectory& traj, const DecayReference& ref,
                   const DecayFitOptions& opts = {});

/// Norms of N(t) - reference per snapshot: (sup, weighted l1).
std::vector<std::array<double, 2>> deviation_norms(const Trajectory& traj,
                                                   const DecayReference& ref);

}  // namespace migepi
