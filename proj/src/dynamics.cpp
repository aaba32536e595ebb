#include "migepi/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "migepi/error.hpp"
#include "migepi/linalg.hpp"

namespace migepi {

namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

void check_initial(const Field& n0, std::size_t n) {
  if (static_cast<std::size_t>(n0.size()) != n) {
    fail(ErrorCode::DimensionMismatch, "initial field has " + std::to_string(n0.size()) +
                                           " entries, expected " + std::to_string(n));
  }
  if (!n0.allFinite()) fail(ErrorCode::NonFinite, "initial field is not finite");
  if ((n0.array() < 0.0).any()) fail(ErrorCode::NegativeValue, "initial field is negative");
}

// (1 - e^{-c t}) / c, continuous at c = 0.
double relax(double c, double t) {
  if (c == 0.0) return t;
  return -std::expm1(-c * t) / c;
}

// int_0^t e^{-lambda s} e^{-c (t - s)} ds without cancellation.
double convolve_exponentials(double lambda, double c, double t) {
  if (lambda >= c) return std::exp(-c * t) * relax(lambda - c, t);
  return std::exp(-lambda * t) * relax(c - lambda, t);
}

}  // namespace

std::vector<double> snapshot_times(double t_final, std::size_t n_snapshots) {
  if (!(t_final >= 0.0) || !std::isfinite(t_final)) {
    fail(ErrorCode::InvalidArgument, "t_final must be finite and nonnegative");
  }
  if (n_snapshots == 0) fail(ErrorCode::InvalidArgument, "need at least one snapshot");
  if (n_snapshots == 1) {
    if (t_final != 0.0) {
      fail(ErrorCode::InvalidArgument, "a positive t_final needs at least two snapshots");
    }
    return {0.0};
  }
  std::vector<double> t(n_snapshots);
  for (std::size_t k = 0; k < n_snapshots; ++k) {
    t[k] = t_final * static_cast<double>(k) / static_cast<double>(n_snapshots - 1);
  }
  t.back() = t_final;
  return t;
}

Trajectory evolve_linear(const GeneratorMatrix& g, const Field& n0, double t_final,
                         std::size_t n_snapshots) {
  check_initial(n0, g.size());
  const std::vector<double> times = snapshot_times(t_final, n_snapshots);
  Trajectory traj;
  traj.weights = g.kernel->grid().weights();
  traj.snapshots.reserve(times.size());
  traj.snapshots.push_back({0.0, n0});
  if (times.size() == 1) return traj;

  const double dt = times[1] - times[0];
  const Matrix step = linalg::expm(g.h * dt);
  Field n = n0;
  for (std::size_t k = 1; k < times.size(); ++k) {
    n = step * n;
    if (!n.allFinite()) {
      fail(ErrorCode::NonFinite, "non-finite population at t=" + std::to_string(times[k]));
    }
    traj.snapshots.push_back({times[k], n});
  }
  return traj;
}

Field closed_form_homogeneous(const Grid& grid, double c, const Field& n0, double t) {
  if (!(c >= 0.0)) fail(ErrorCode::InvalidArgument, "homogeneous rate must be nonnegative");
  const double vol = grid.total_volume();
  const double m0 = integrate(grid, n0);
  const double decay = std::exp(-c * t * vol);
  return n0 * decay + Field::Constant(n0.size(), (m0 / vol) * -std::expm1(-c * t * vol));
}

Field closed_form_destination_only(const Grid& grid, const Field& v, const Field& n0,
                                   double t) {
  if ((v.array() < 0.0).any()) fail(ErrorCode::NegativeValue, "destination profile is negative");
  const double a = integrate(grid, v);
  if (!(a > 0.0)) fail(ErrorCode::InvalidArgument, "destination profile integrates to zero");
  const double m0 = integrate(grid, n0);
  return n0 * std::exp(-a * t) + v * (m0 / a) * -std::expm1(-a * t);
}

TwoPieceCoefficients two_piece_coefficients(const Grid& grid, const TwoPieceParams& p) {
  const auto n = idx(grid.size());
  if (p.v1.size() != n || p.v2.size() != n || p.blocks.size() != grid.size()) {
    fail(ErrorCode::DimensionMismatch, "two-piece parameters do not match grid");
  }
  std::vector<bool> in1(grid.size()), in2(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (p.blocks[i] > 1) fail(ErrorCode::InvalidArgument, "two-piece block index must be 0 or 1");
    in1[i] = p.blocks[i] == 0;
    in2[i] = p.blocks[i] == 1;
  }
  TwoPieceCoefficients c;
  c.a11 = integrate_over(grid, p.v1, in1);
  c.a21 = integrate_over(grid, p.v1, in2);
  c.a12 = integrate_over(grid, p.v2, in1);
  c.a22 = integrate_over(grid, p.v2, in2);
  c.b1 = c.a11 + c.a21;
  c.b2 = c.a12 + c.a22;
  return c;
}

namespace {

void check_two_piece_ergodic(const TwoPieceParams& p) {
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const auto ii = idx(i);
    if (p.blocks[i] == 1 && !(p.v1[ii] > 0.0)) {
      fail(ErrorCode::InvalidArgument, "two-piece kernel needs v1 > 0 on the second block");
    }
    if (p.blocks[i] == 0 && !(p.v2[ii] > 0.0)) {
      fail(ErrorCode::InvalidArgument, "two-piece kernel needs v2 > 0 on the first block");
    }
  }
  if ((p.v1.array() < 0.0).any() || (p.v2.array() < 0.0).any()) {
    fail(ErrorCode::NegativeValue, "two-piece profiles must be nonnegative");
  }
}

}  // namespace

std::array<double, 2> two_piece_block_masses(const Grid& grid, const TwoPieceParams& p,
                                             const Field& n0, double t) {
  check_two_piece_ergodic(p);
  const TwoPieceCoefficients c = two_piece_coefficients(grid, p);
  std::vector<bool> in1(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) in1[i] = p.blocks[i] == 0;
  const double y10 = integrate_over(grid, n0, in1);
  const double m0 = integrate(grid, n0);
  const double y20 = m0 - y10;
  const double lambda = c.a12 + c.a21;
  const double e = std::exp(-lambda * t);
  const double grow = -std::expm1(-lambda * t);
  return {y10 * e + c.a12 * m0 / lambda * grow, y20 * e + c.a21 * m0 / lambda * grow};
}

Field closed_form_two_piece(const Grid& grid, const TwoPieceParams& p, const Field& n0,
                            double t) {
  check_two_piece_ergodic(p);
  const TwoPieceCoefficients c = two_piece_coefficients(grid, p);
  std::vector<bool> in1(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) in1[i] = p.blocks[i] == 0;
  const double y10 = integrate_over(grid, n0, in1);
  const double m0 = integrate(grid, n0);
  const double y20 = m0 - y10;
  const double lambda = c.a12 + c.a21;
  // y_k(s) = alpha_k + beta_k e^{-lambda s}
  const double alpha1 = c.a12 * m0 / lambda;
  const double alpha2 = c.a21 * m0 / lambda;
  const double beta1 = y10 - alpha1;
  const double beta2 = y20 - alpha2;

  Field out(n0.size());
  for (Eigen::Index i = 0; i < n0.size(); ++i) {
    const double ve = p.blocks[static_cast<std::size_t>(i)] == 0 ? c.b1 : c.b2;
    const double r = relax(ve, t);
    const double conv = convolve_exponentials(lambda, ve, t);
    out[i] = n0[i] * std::exp(-ve * t) + p.v1[i] * (alpha1 * r + beta1 * conv) +
             p.v2[i] * (alpha2 * r + beta2 * conv);
  }
  return out;
}

Field two_piece_steady_state(const Grid& grid, const TwoPieceParams& p) {
  check_two_piece_ergodic(p);
  const TwoPieceCoefficients c = two_piece_coefficients(grid, p);
  Field out(p.v1.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const double ve = p.blocks[static_cast<std::size_t>(i)] == 0 ? c.b1 : c.b2;
    out[i] = (c.a12 * p.v1[i] + c.a21 * p.v2[i]) / ((c.a12 + c.a21) * ve);
  }
  return out;
}

Matrix BlockReduction::generator() const {
  Matrix g = a;
  g.diagonal() -= b;
  return g;
}

Field BlockReduction::masses_at(double t) const {
  return linalg::expm(generator() * t) * y0;
}

Field BlockReduction::deviation_at(double t) const {
  return masses_at(t) - y0.sum() * xi;
}

BlockReduction n_piece_reduce(const KernelData& k, const std::vector<std::size_t>& block_of,
                              const Field& n0) {
  const std::size_t n = k.size();
  if (block_of.size() != n) fail(ErrorCode::DimensionMismatch, "block assignment length");
  check_initial(n0, n);
  const std::size_t m = *std::max_element(block_of.begin(), block_of.end()) + 1;
  BlockReduction red;
  red.blocks.assign(m, {});
  for (std::size_t i = 0; i < n; ++i) red.blocks[block_of[i]].push_back(i);
  for (std::size_t b = 0; b < m; ++b) {
    if (red.blocks[b].empty()) {
      fail(ErrorCode::InvalidArgument, "block " + std::to_string(b) + " is empty");
    }
  }

  const Matrix& v = k.v();
  const double tol = 1e-10 * std::max(v.cwiseAbs().maxCoeff(), 1e-300);
  for (const auto& cells : red.blocks) {
    const Eigen::Index ref = idx(cells.front());
    for (std::size_t j : cells) {
      const double dev = (v.col(idx(j)) - v.col(ref)).cwiseAbs().maxCoeff();
      if (dev > tol) {
        fail(ErrorCode::NotSemiConstant,
             "column " + std::to_string(j) + " deviates from its block by " + std::to_string(dev));
      }
    }
  }

  const Field& w = k.grid().weights();
  const auto mm = idx(m);
  red.a = Matrix::Zero(mm, mm);
  red.y0 = Field::Zero(mm);
  for (std::size_t bk = 0; bk < m; ++bk) {
    const Eigen::Index ref = idx(red.blocks[bk].front());
    for (std::size_t bj = 0; bj < m; ++bj) {
      double s = 0.0;
      for (std::size_t i : red.blocks[bj]) s += w[idx(i)] * v(idx(i), ref);
      red.a(idx(bj), idx(bk)) = s;
    }
    for (std::size_t i : red.blocks[bk]) red.y0[idx(bk)] += w[idx(i)] * n0[idx(i)];
  }
  red.b = red.a.colwise().sum().transpose();

  const auto comps = strongly_connected_components(
      m, [&](std::size_t to, std::size_t from) { return red.a(idx(to), idx(from)) > 0.0; });
  if (comps.size() != 1) {
    fail(ErrorCode::ReducibleBlocks,
         "block matrix splits into " + std::to_string(comps.size()) + " components");
  }

  const Matrix gen = red.generator();
  if (m == 1) {
    red.xi = Field::Ones(1);
    red.kappa_block = std::numeric_limits<double>::infinity();
    return red;
  }
  red.xi = linalg::bordered_null_vector(gen, Field::Ones(mm));
  const Eigen::VectorXcd eigs = linalg::eigenvalues(gen);
  const Eigen::Index d = linalg::dominant_index(eigs);
  double second = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < eigs.size(); ++i) {
    if (i != d) second = std::max(second, eigs[i].real());
  }
  red.kappa_block = eigs[d].real() - second;
  return red;
}

Field n_piece_steady_state(const KernelData& k, const BlockReduction& red) {
  const Matrix& v = k.v();
  const auto n = idx(k.size());
  Field out = Field::Zero(n);
  for (std::size_t bk = 0; bk < red.blocks.size(); ++bk) {
    out += red.xi[idx(bk)] * v.col(idx(red.blocks[bk].front()));
  }
  return out.cwiseQuotient(k.emigration());
}

NonergodicReport analyze_nonergodic(const KernelData& k, const Field& n0, double t_final,
                                    std::size_t n_snapshots) {
  check_initial(n0, k.size());
  const ErgodicityReport erg = ergodicity_report(k);
  if (erg.classification != ErgodicClass::Separable &&
      erg.classification != ErgodicClass::OneWay) {
    fail(ErrorCode::WrongClassification,
         std::string("non-ergodic analysis needs a separable or one-way kernel, got ") +
             to_string(erg.classification));
  }
  const GeneratorMatrix g = build_generator(k);
  const Field& w = k.grid().weights();
  const auto n = idx(k.size());

  NonergodicReport rep;
  rep.classification = erg.classification;
  rep.limit_field = Field::Zero(n);
  rep.initial_mass = w.dot(n0);

  auto component_profile = [&](const std::vector<std::size_t>& cells) {
    Field wc(idx(cells.size()));
    for (std::size_t a = 0; a < cells.size(); ++a) wc[idx(a)] = w[idx(cells[a])];
    const Field local = linalg::bordered_null_vector(restrict_matrix(g.h, cells), wc);
    Field full = Field::Zero(n);
    for (std::size_t a = 0; a < cells.size(); ++a) full[idx(cells[a])] = local[idx(a)];
    return full;
  };

  if (erg.classification == ErgodicClass::Separable) {
    for (const auto& cells : erg.components) {
      SeparableComponent comp;
      comp.cells = cells;
      comp.n_star = component_profile(cells);
      for (std::size_t i : cells) comp.mass += w[idx(i)] * n0[idx(i)];
      rep.limit_field += comp.mass * comp.n_star;
      rep.components.push_back(std::move(comp));
    }
  } else {
    const auto [from, to] = erg.reachability.front();
    rep.upstream = erg.components[from];
    rep.absorbing = erg.components[to];
    rep.upstream_decay_rate = -max_real_eigenvalue(restrict_matrix(g.h, rep.upstream));
    rep.min_upstream_leak = std::numeric_limits<double>::infinity();
    for (std::size_t j : rep.upstream) {
      double leak = 0.0;
      for (std::size_t i : rep.absorbing) leak += w[idx(i)] * k.v()(idx(i), idx(j));
      rep.min_upstream_leak = std::min(rep.min_upstream_leak, leak);
    }
    rep.limit_field = rep.initial_mass * component_profile(rep.absorbing);
    for (std::size_t j : rep.upstream) {
      rep.upstream_sup_initial = std::max(rep.upstream_sup_initial, std::abs(n0[idx(j)]));
    }
  }

  rep.trajectory = evolve_linear(g, n0, t_final, std::max<std::size_t>(n_snapshots, 2));
  const Field& nf = rep.trajectory.snapshots.back().values;
  rep.final_mass = w.dot(nf);
  rep.final_deviation = sup_norm(nf - rep.limit_field);
  for (std::size_t j : rep.upstream) {
    rep.upstream_sup_final = std::max(rep.upstream_sup_final, std::abs(nf[idx(j)]));
  }
  return rep;
}

std::vector<std::array<double, 2>> deviation_norms(const Trajectory& traj,
                                                   const DecayReference& ref) {
  std::vector<std::array<double, 2>> out;
  out.reserve(traj.snapshots.size());
  for (const auto& snap : traj.snapshots) {
    if (snap.values.size() != ref.field.size()) {
      fail(ErrorCode::DimensionMismatch, "reference field length does not match trajectory");
    }
    const Field dev = snap.values * std::exp(-ref.growth_rate * snap.time) - ref.field;
    out.push_back({sup_norm(dev), traj.weights.dot(dev.cwiseAbs())});
  }
  return out;
}

DecayFit fit_decay(const Trajectory& traj, const DecayReference& ref,
                   const DecayFitOptions& opts) {
  const auto& snaps = traj.snapshots;
  if (snaps.size() < 4) fail(ErrorCode::InvalidArgument, "decay fit needs at least 4 snapshots");
  const auto norms = deviation_norms(traj, ref);
  const std::size_t which = opts.norm == DeviationNorm::Sup ? 0 : 1;

  const double scale = std::max({sup_norm(ref.field), sup_norm(snaps.front().values),
                                 std::numeric_limits<double>::min()});
  const double t0 = snaps.front().time;
  const double t_cut = t0 + opts.discard_fraction * (snaps.back().time - t0);
  std::size_t begin = 0;
  while (begin < snaps.size() && snaps[begin].time < t_cut) ++begin;
  if (begin == snaps.size() || norms[begin][which] < opts.converged_floor * scale) {
    fail(ErrorCode::AlreadyConverged, "deviation is already below the convergence floor");
  }
  std::size_t end = begin;
  while (end < snaps.size() && norms[end][which] >= opts.noise_floor * scale) ++end;
  if (end - begin < 4) {
    fail(ErrorCode::InvalidArgument,
         "fewer than 4 snapshots above the noise floor in the fit window");
  }
  for (std::size_t kk = begin + 1; kk < end; ++kk) {
    if (!(norms[kk][which] < norms[kk - 1][which])) {
      fail(ErrorCode::NonMonotone,
           "deviation increases at t=" + std::to_string(snaps[kk].time));
    }
  }

  const auto count = static_cast<double>(end - begin);
  double st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t kk = begin; kk < end; ++kk) {
    const double t = snaps[kk].time;
    const double y = std::log(norms[kk][which]);
    st += t;
    sy += y;
    stt += t * t;
    sty += t * y;
  }
  const double denom = count * stt - st * st;
  const double slope = (count * sty - st * sy) / denom;
  const double intercept = (sy - slope * st) / count;
  double ss = 0.0;
  for (std::size_t kk = begin; kk < end; ++kk) {
    const double e = std::log(norms[kk][which]) - (intercept + slope * snaps[kk].time);
    ss += e * e;
  }

  DecayFit fit;
  fit.kappa_hat = -slope;
  fit.prefactor_hat = std::exp(intercept);
  fit.residual = std::sqrt(ss / count);
  fit.t_begin = snaps[begin].time;
  fit.t_end = snaps[end - 1].time;
  fit.points = end - begin;
  return fit;
}

}  // namespace migepi
