#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "migepi/grid.hpp"

namespace migepi::linalg {

/// Matrix exponential by scaling and squaring with the degree-13 Pade
/// approximant (Higham 2005). Accurate to a few ulps times the condition of
/// the exponential for the moderately normed generators used here.
Matrix expm(const Matrix& a);

/// All eigenvalues of a real square matrix.
Eigen::VectorXcd eigenvalues(const Matrix& a);

/// Index of the eigenvalue with the largest real part; ties resolved towards
/// the smallest imaginary magnitude.
Eigen::Index dominant_index(const Eigen::VectorXcd& eigs);

/// Null vector of a singular matrix whose kernel is one-dimensional, scaled
/// so that weights . x == 1. Solves the bordered system in which the last
/// row is replaced by the normalization.
Field bordered_null_vector(const Matrix& a, const Field& weights);

struct PowerResult {
  double eigenvalue = 0.0;     // dominant eigenvalue of the original matrix
  Field vector;                // positive Perron vector, unit l1 norm
  double ratio = 0.0;          // asymptotic contraction factor of the iteration
  double delta = 0.0;          // step of the shifted iteration matrix
  double rho = 1.0;            // Perron root of the iteration matrix
  int iterations = 0;
  bool converged = false;

  /// Gap estimate in generator units from the contraction factor, assuming
  /// the subdominant eigenvalue of the iteration matrix is real.
  double gap_estimate() const { return rho * (1.0 - ratio) / delta; }
};

/// Power iteration on P = I + delta (M - c I), with c = max diag(M) and delta
/// small enough that P is entrywise nonnegative with a positive diagonal.
/// M must be a Metzler matrix (nonnegative off-diagonal). The start vector is
/// drawn from a fixed-seed uniform distribution on (0.5, 1.5).
PowerResult metzler_power_iteration(const Matrix& m, std::uint64_t seed = 0,
                                    double tol = 1e-14, int max_iter = 2000000);

}  // namespace migepi::linalg
