#include "migepi/grid.hpp"

#include <cmath>
#include <string>

#include "migepi/error.hpp"

namespace migepi {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Ok: return "ok";
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::DimensionMismatch: return "dimension mismatch";
    case ErrorCode::NegativeValue: return "negative value";
    case ErrorCode::NonFinite: return "non-finite value";
    case ErrorCode::NotErgodic: return "kernel is not ergodic";
    case ErrorCode::ZeroEmigration: return "zero emigration rate";
    case ErrorCode::DominanceNotEstablished: return "dominance not established";
    case ErrorCode::SingularShift: return "singular shift";
    case ErrorCode::NotSemiConstant: return "kernel is not piecewise semi-constant";
    case ErrorCode::ReducibleBlocks: return "reducible block matrix";
    case ErrorCode::WrongClassification: return "wrong classification";
    case ErrorCode::AlreadyConverged: return "already converged";
    case ErrorCode::NonMonotone: return "non-monotone deviation";
    case ErrorCode::StepFailure: return "step-size failure";
    case ErrorCode::BracketFailure: return "bracket failure";
    case ErrorCode::ConfigError: return "configuration error";
    case ErrorCode::IoError: return "i/o error";
    case ErrorCode::Internal: return "internal error";
  }
  return "unknown error";
}

Field Grid::first_coordinates() const {
  Field x(static_cast<Eigen::Index>(cells_.size()));
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    x[static_cast<Eigen::Index>(i)] = cells_[i].center[0];
  }
  return x;
}

Grid build_uniform_grid(int dim, const Bounds& bounds,
                        std::array<std::size_t, 2> n_cells) {
  if (dim != 1 && dim != 2) {
    fail(ErrorCode::InvalidArgument,
         "grid dimension must be 1 or 2, got " + std::to_string(dim));
  }
  if (dim == 1) n_cells[1] = 1;
  for (int a = 0; a < dim; ++a) {
    if (n_cells[a] == 0) {
      fail(ErrorCode::InvalidArgument, "grid needs at least one cell per axis");
    }
    const double len = bounds.hi[a] - bounds.lo[a];
    if (!(len > 0.0) || !std::isfinite(len)) {
      fail(ErrorCode::InvalidArgument, "grid bounds have zero or negative volume");
    }
  }
  const std::size_t total = n_cells[0] * n_cells[1];
  if (total > 4096) {
    fail(ErrorCode::InvalidArgument,
         "grid has " + std::to_string(total) + " cells; dense storage is capped at 4096");
  }

  Grid g;
  g.dim_ = dim;
  g.bounds_ = bounds;
  g.n_cells_ = n_cells;

  Point h{0.0, 1.0};
  for (int a = 0; a < dim; ++a) {
    h[a] = (bounds.hi[a] - bounds.lo[a]) / static_cast<double>(n_cells[a]);
  }
  const double cell_volume = dim == 1 ? h[0] : h[0] * h[1];

  g.cells_.reserve(total);
  for (std::size_t ix = 0; ix < n_cells[0]; ++ix) {
    for (std::size_t iy = 0; iy < n_cells[1]; ++iy) {
      Cell c;
      c.center[0] = bounds.lo[0] + (static_cast<double>(ix) + 0.5) * h[0];
      c.extent[0] = h[0];
      if (dim == 2) {
        c.center[1] = bounds.lo[1] + (static_cast<double>(iy) + 0.5) * h[1];
        c.extent[1] = h[1];
      }
      g.cells_.push_back(c);
    }
  }
  g.weights_ = Field::Constant(static_cast<Eigen::Index>(total), cell_volume);
  g.total_volume_ = dim == 1 ? bounds.hi[0] - bounds.lo[0]
                             : (bounds.hi[0] - bounds.lo[0]) * (bounds.hi[1] - bounds.lo[1]);
  return g;
}

double integrate(const Grid& grid, const Field& field) {
  if (static_cast<std::size_t>(field.size()) != grid.size()) {
    fail(ErrorCode::DimensionMismatch,
         "field has " + std::to_string(field.size()) + " entries, grid has " +
             std::to_string(grid.size()) + " cells");
  }
  const Field& w = grid.weights();
  double sum = 0.0;
  for (Eigen::Index j = 0; j < field.size(); ++j) sum += w[j] * field[j];
  return sum;
}

double integrate_over(const Grid& grid, const Field& field,
                      const std::vector<bool>& mask) {
  if (static_cast<std::size_t>(field.size()) != grid.size() || mask.size() != grid.size()) {
    fail(ErrorCode::DimensionMismatch, "field or mask length does not match grid");
  }
  const Field& w = grid.weights();
  double sum = 0.0;
  for (Eigen::Index j = 0; j < field.size(); ++j) {
    if (mask[static_cast<std::size_t>(j)]) sum += w[j] * field[j];
  }
  return sum;
}

double sup_norm(const Field& field) {
  return field.size() == 0 ? 0.0 : field.cwiseAbs().maxCoeff();
}

double weighted_l1_norm(const Grid& grid, const Field& field) {
  return integrate(grid, field.cwiseAbs());
}

}  // namespace migepi
