#include "migepi/linalg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "migepi/error.hpp"

namespace migepi::linalg {

Matrix expm(const Matrix& a) {
  if (a.rows() != a.cols()) fail(ErrorCode::DimensionMismatch, "expm needs a square matrix");
  if (!a.allFinite()) fail(ErrorCode::NonFinite, "expm argument is not finite");
  const Eigen::Index n = a.rows();
  if (n == 0) return a;
  if (a.isZero(0.0)) return Matrix::Identity(n, n);

  static constexpr std::array<double, 14> b = {
      64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
      1187353796428800.0,  129060195264000.0,   10559470521600.0,
      670442572800.0,      33522128640.0,       1323241920.0,
      40840800.0,          960960.0,            16380.0,
      182.0,               1.0};
  constexpr double theta13 = 5.371920351148152;

  const double norm1 = a.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm1 > theta13) {
    squarings = static_cast<int>(std::ceil(std::log2(norm1 / theta13)));
  }
  const Matrix as = a / std::ldexp(1.0, squarings);

  const Matrix id = Matrix::Identity(n, n);
  const Matrix a2 = as * as;
  const Matrix a4 = a2 * a2;
  const Matrix a6 = a4 * a2;

  const Matrix u_inner = b[13] * a6 + b[11] * a4 + b[9] * a2;
  const Matrix u = as * (a6 * u_inner + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
  const Matrix v_inner = b[12] * a6 + b[10] * a4 + b[8] * a2;
  const Matrix v = a6 * v_inner + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;

  Matrix r = (v - u).partialPivLu().solve(v + u);
  for (int k = 0; k < squarings; ++k) r = r * r;
  return r;
}

Eigen::VectorXcd eigenvalues(const Matrix& a) {
  Eigen::EigenSolver<Matrix> es(a, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) fail(ErrorCode::Internal, "eigenvalue computation failed");
  return es.eigenvalues();
}

Eigen::Index dominant_index(const Eigen::VectorXcd& eigs) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < eigs.size(); ++i) {
    const double re = eigs[i].real();
    const double best_re = eigs[best].real();
    if (re > best_re || (re == best_re && std::abs(eigs[i].imag()) < std::abs(eigs[best].imag()))) {
      best = i;
    }
  }
  return best;
}

Field bordered_null_vector(const Matrix& a, const Field& weights) {
  const Eigen::Index n = a.rows();
  Matrix m = a;
  Field rhs = Field::Zero(n);
  m.row(n - 1) = weights.transpose();
  rhs[n - 1] = 1.0;
  Eigen::FullPivLU<Matrix> lu(m);
  if (!lu.isInvertible()) {
    fail(ErrorCode::NotErgodic, "null space is not one-dimensional");
  }
  Field x = lu.solve(rhs);
  // One step of iterative refinement on the bordered system.
  const Field res = rhs - m * x;
  x += lu.solve(res);
  return x;
}

PowerResult metzler_power_iteration(const Matrix& m, std::uint64_t seed, double tol,
                                    int max_iter) {
  const Eigen::Index n = m.rows();
  PowerResult out;
  const double c = m.diagonal().maxCoeff();
  // Diagonal of (M - cI) is <= 0; its most negative entry bounds delta.
  const double spread = (c - m.diagonal().array()).maxCoeff();
  const double offdiag = m.cwiseAbs().rowwise().sum().maxCoeff();
  const double delta = 0.5 / std::max({spread, 1e-300, 1e-3 * offdiag});
  Matrix p = delta * (m - c * Matrix::Identity(n, n));
  p.diagonal().array() += 1.0;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.5, 1.5);
  Field x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = dist(rng);
  x /= x.sum();

  // Entries of x are O(1/n) in l1 normalization; successive differences
  // below this floor are round-off.
  const double noise = 64.0 * std::numeric_limits<double>::epsilon();
  double prev_diff = 0.0;
  double ratio = 0.0;
  double rho = 1.0;
  for (int it = 1; it <= max_iter; ++it) {
    Field y = p * x;
    rho = y.sum();  // x has unit l1 norm and stays positive
    y /= rho;
    const double diff = (y - x).lpNorm<1>();
    x = std::move(y);
    out.iterations = it;
    if (diff <= noise) {
      out.converged = true;
      break;
    }
    if (prev_diff > 0.0 && diff > 1e3 * noise) ratio = std::min(diff / prev_diff, 0.999999);
    prev_diff = diff;
    // Remaining error of a geometric tail with contraction ratio.
    if (it > 2 && diff * ratio / (1.0 - ratio) <= tol) {
      out.converged = true;
      break;
    }
  }
  out.eigenvalue = c + (rho - 1.0) / delta;
  out.vector = x;
  out.ratio = ratio;
  out.delta = delta;
  out.rho = rho;
  return out;
}

}  // namespace migepi::linalg
