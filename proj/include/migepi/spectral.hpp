#pragma once

#include <cstdint>
#include <memory>

#include <Eigen/LU>

#include "migepi/kernel.hpp"

namespace migepi {

/// Discrete migration generator with proliferation:
///   (H phi)_i = sum_j w_j v(i, j) phi_j - v_e[i] phi_i + r_i phi_i.
struct GeneratorMatrix {
  Matrix h;
  Field r;
  std::shared_ptr<const KernelData> kernel;

  std::size_t size() const noexcept { return static_cast<std::size_t>(h.rows()); }
};

GeneratorMatrix build_generator(const KernelData& k);
GeneratorMatrix build_generator(const KernelData& k, const Field& r);
GeneratorMatrix build_generator(std::shared_ptr<const KernelData> k, const Field& r);

struct SpectralSummary {
  double s = 0.0;                  // spectral bound
  Field n_star;                    // dominant profile, empty if not established
  Field mu;                        // discrete eigenmeasure, sums to 1
  double gap = 0.0;                // s minus the next largest real part
  bool dominant_simple = false;
  double essential_threshold = 0.0;  // max_j (r_j - v_e[j])
};

enum class EigenMethod { Auto, Dense, Power };

struct SpectralOptions {
  EigenMethod method = EigenMethod::Auto;
  std::size_t dense_limit = 512;   // Auto uses dense solvers up to this size
  std::uint64_t seed = 0;          // power iteration start vector
  double power_tol = 1e-14;
};

/// Steady profile of the conservative (r == 0) generator, normalized to unit
/// mass. mu is the normalized cell volume. Throws NotErgodic or ZeroEmigration.
SpectralSummary steady_state(const KernelData& k, const SpectralOptions& opts = {});

/// Spectral bound and, when it is a strictly dominant simple eigenvalue above
/// max(r - v_e), the Perron pair normalized so that mu . n_star == 1. When
/// dominance cannot be established only s is reported and dominant_simple is
/// false.
SpectralSummary spectral_bound(const GeneratorMatrix& g, const SpectralOptions& opts = {});

/// Distance from the spectral bound to the rest of the spectrum's real parts.
/// Throws DominanceNotEstablished.
double spectral_gap(const GeneratorMatrix& g, const SpectralOptions& opts = {});

/// Largest real part of the spectrum of an arbitrary dense matrix.
double max_real_eigenvalue(const Matrix& m);

/// LU factorization of (lambda I - h), reusable across right-hand sides.
class Resolvent {
 public:
  /// Throws SingularShift when lambda is numerically an eigenvalue.
  Resolvent(const Matrix& h, double lambda);

  Field solve(const Field& rhs) const;
  /// Column-wise solve for several right-hand sides.
  Matrix solve_columns(const Matrix& rhs) const;
  double shift() const noexcept { return lambda_; }

 private:
  double lambda_;
  Eigen::PartialPivLU<Matrix> lu_;
};

/// Solves (lambda I - h) phi = rhs.
Field resolvent_solve(const GeneratorMatrix& g, double lambda, const Field& rhs);

}  // namespace migepi
