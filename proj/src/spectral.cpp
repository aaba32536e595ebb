#include "migepi/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>

#include "migepi/error.hpp"
#include "migepi/linalg.hpp"

namespace migepi {

namespace {

constexpr double kDominanceTol = 1e-8;

bool use_dense(const SpectralOptions& opts, std::size_t n) {
  switch (opts.method) {
    case EigenMethod::Dense: return true;
    case EigenMethod::Power: return false;
    case EigenMethod::Auto: return n <= opts.dense_limit;
  }
  return true;
}

double row_sum_norm(const Matrix& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

// Scale so that the entry of largest magnitude is positive.
Field fix_sign(Field x) {
  Eigen::Index imax = 0;
  x.cwiseAbs().maxCoeff(&imax);
  if (x[imax] < 0.0) x = -x;
  return x;
}

Field dominant_real_eigenvector(const Matrix& m) {
  Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/true);
  if (es.info() != Eigen::Success) fail(ErrorCode::Internal, "eigen decomposition failed");
  const Eigen::Index d = linalg::dominant_index(es.eigenvalues());
  return fix_sign(es.eigenvectors().col(d).real());
}

// Largest real part over the spectrum after removing the eigenvalue at index d.
double second_real_part(const Eigen::VectorXcd& eigs, Eigen::Index d) {
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < eigs.size(); ++i) {
    if (i != d) best = std::max(best, eigs[i].real());
  }
  return best;
}

}  // namespace

GeneratorMatrix build_generator(std::shared_ptr<const KernelData> k, const Field& r) {
  const auto n = static_cast<Eigen::Index>(k->size());
  if (r.size() != n) {
    fail(ErrorCode::DimensionMismatch, "proliferation rate has " + std::to_string(r.size()) +
                                           " entries, grid has " + std::to_string(n));
  }
  if (!r.allFinite()) fail(ErrorCode::NonFinite, "proliferation rate is not finite");
  const Field& w = k->grid().weights();
  GeneratorMatrix g;
  g.h = k->v() * w.asDiagonal();
  g.h.diagonal() -= k->emigration();
  g.h.diagonal() += r;
  g.r = r;
  g.kernel = std::move(k);
  return g;
}

GeneratorMatrix build_generator(const KernelData& k, const Field& r) {
  return build_generator(std::make_shared<const KernelData>(k), r);
}

GeneratorMatrix build_generator(const KernelData& k) {
  return build_generator(k, Field::Zero(static_cast<Eigen::Index>(k.size())));
}

double max_real_eigenvalue(const Matrix& m) {
  const Eigen::VectorXcd eigs = linalg::eigenvalues(m);
  return eigs[linalg::dominant_index(eigs)].real();
}

SpectralSummary steady_state(const KernelData& k, const SpectralOptions& opts) {
  if (!ergodicity_report(k).is_ergodic) {
    fail(ErrorCode::NotErgodic,
         "kernel is not ergodic; the steady state is not unique, analyze each component");
  }
  if ((k.emigration().array() <= 0.0).any()) {
    fail(ErrorCode::ZeroEmigration, "some cell has zero emigration rate");
  }
  const GeneratorMatrix g = build_generator(k);
  const Field& w = k.grid().weights();
  const auto n = static_cast<Eigen::Index>(k.size());

  SpectralSummary out;
  out.s = 0.0;
  out.essential_threshold = (-k.emigration()).maxCoeff();
  out.mu = w / w.sum();
  out.dominant_simple = true;

  if (n == 1) {
    out.n_star = Field::Constant(1, 1.0 / w[0]);
    out.gap = std::numeric_limits<double>::infinity();
    return out;
  }

  if (use_dense(opts, k.size())) {
    out.n_star = linalg::bordered_null_vector(g.h, w);
    const Eigen::VectorXcd eigs = linalg::eigenvalues(g.h);
    const Eigen::Index d = linalg::dominant_index(eigs);
    out.gap = eigs[d].real() - second_real_part(eigs, d);
  } else {
    const auto pr = linalg::metzler_power_iteration(g.h, opts.seed, opts.power_tol);
    if (!pr.converged) fail(ErrorCode::Internal, "power iteration did not converge");
    out.n_star = pr.vector / w.dot(pr.vector);
    out.gap = pr.gap_estimate();
  }
  if ((out.n_star.array() <= 0.0).any()) {
    fail(ErrorCode::Internal, "steady profile is not strictly positive");
  }
  return out;
}

SpectralSummary spectral_bound(const GeneratorMatrix& g, const SpectralOptions& opts) {
  const auto n = static_cast<Eigen::Index>(g.size());
  SpectralSummary out;
  const Field& v_e = g.kernel->emigration();
  out.essential_threshold = (g.r - v_e).maxCoeff();
  const double scale = std::max(row_sum_norm(g.h), std::numeric_limits<double>::min());
  const bool ergodic = ergodicity_report(*g.kernel).is_ergodic;

  if (n == 1) {
    out.s = g.h(0, 0);
    out.n_star = Field::Ones(1);
    out.mu = Field::Ones(1);
    out.gap = std::numeric_limits<double>::infinity();
    out.dominant_simple = true;
    return out;
  }

  if (use_dense(opts, g.size())) {
    const Eigen::VectorXcd eigs = linalg::eigenvalues(g.h);
    const Eigen::Index d = linalg::dominant_index(eigs);
    out.s = eigs[d].real();
    int cluster = 0;
    for (Eigen::Index i = 0; i < eigs.size(); ++i) {
      if (std::abs(eigs[i] - eigs[d]) <= kDominanceTol * scale) ++cluster;
    }
    const bool dominant =
        ergodic && cluster == 1 && out.s - out.essential_threshold > kDominanceTol * scale;
    if (!dominant) return out;
    out.gap = out.s - second_real_part(eigs, d);
    out.n_star = dominant_real_eigenvector(g.h);
    out.mu = dominant_real_eigenvector(g.h.transpose());
  } else {
    if (!ergodic) {
      // The Perron root of an irreducible Metzler matrix is what the power
      // iteration targets; without irreducibility only s is meaningful.
      out.s = max_real_eigenvalue(g.h);
      return out;
    }
    const auto right = linalg::metzler_power_iteration(g.h, opts.seed, opts.power_tol);
    const auto left = linalg::metzler_power_iteration(g.h.transpose(), opts.seed, opts.power_tol);
    if (!right.converged || !left.converged) {
      fail(ErrorCode::Internal, "power iteration did not converge");
    }
    out.s = right.eigenvalue;
    if (!(out.s - out.essential_threshold > kDominanceTol * scale)) return out;
    out.gap = right.gap_estimate();
    out.n_star = right.vector;
    out.mu = left.vector;
  }
  out.mu /= out.mu.sum();
  out.n_star /= out.mu.dot(out.n_star);
  out.dominant_simple = true;
  return out;
}

double spectral_gap(const GeneratorMatrix& g, const SpectralOptions& opts) {
  const SpectralSummary s = spectral_bound(g, opts);
  if (!s.dominant_simple) {
    fail(ErrorCode::DominanceNotEstablished,
         "spectral bound is not a dominant simple eigenvalue above max(r - v_e)");
  }
  return s.gap;
}

Resolvent::Resolvent(const Matrix& h, double lambda) : lambda_(lambda) {
  Matrix m = -h;
  m.diagonal().array() += lambda;
  lu_.compute(m);
  const double rc = lu_.rcond();
  if (!(rc > 1e-13)) {
    fail(ErrorCode::SingularShift,
         "shift " + std::to_string(lambda) + " is numerically an eigenvalue (rcond " +
             std::to_string(rc) + ")");
  }
}

Field Resolvent::solve(const Field& rhs) const {
  if (rhs.size() != lu_.rows()) fail(ErrorCode::DimensionMismatch, "resolvent rhs length");
  return lu_.solve(rhs);
}

Matrix Resolvent::solve_columns(const Matrix& rhs) const {
  if (rhs.rows() != lu_.rows()) fail(ErrorCode::DimensionMismatch, "resolvent rhs rows");
  return lu_.solve(rhs);
}

Field resolvent_solve(const GeneratorMatrix& g, double lambda, const Field& rhs) {
  return Resolvent(g.h, lambda).solve(rhs);
}

}  // namespace migepi
