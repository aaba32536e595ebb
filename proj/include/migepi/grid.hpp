#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace migepi {

using Field = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Point = std::array<double, 2>;

struct Cell {
  Point center{0.0, 0.0};
  Point extent{0.0, 0.0};  // side lengths; extent[1] is unused in 1D
};

struct Bounds {
  Point lo{0.0, 0.0};
  Point hi{1.0, 1.0};
};

/// Uniform midpoint partition of a bounded interval or box.
///
/// Cells are numbered with the first axis varying slowest: in 2D the cell at
/// axis indices (ix, iy) has index ix * n_cells[1] + iy. Every integral over
/// the domain is realized as the weighted sum over cells in ascending index
/// order, so results are reproducible bit for bit.
class Grid {
 public:
  Grid() = default;

  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return cells_.size(); }
  const std::vector<Cell>& cells() const noexcept { return cells_; }
  const Field& weights() const noexcept { return weights_; }
  double weight(std::size_t i) const { return weights_[static_cast<Eigen::Index>(i)]; }
  const Point& center(std::size_t i) const { return cells_[i].center; }
  double total_volume() const noexcept { return total_volume_; }
  const Bounds& bounds() const noexcept { return bounds_; }
  const std::array<std::size_t, 2>& n_cells() const noexcept { return n_cells_; }

  /// Cell-center first coordinates, convenient for 1D profiles and CSV output.
  Field first_coordinates() const;

 private:
  friend Grid build_uniform_grid(int dim, const Bounds& bounds,
                                 std::array<std::size_t, 2> n_cells);

  int dim_ = 1;
  std::vector<Cell> cells_;
  Field weights_;
  double total_volume_ = 0.0;
  Bounds bounds_;
  std::array<std::size_t, 2> n_cells_{0, 1};
};

/// Throws InvalidArgument for zero cells, unsupported dimension or a
/// zero-volume box. For dim == 1 only n_cells[0] and the first coordinate of
/// the bounds are used.
Grid build_uniform_grid(int dim, const Bounds& bounds,
                        std::array<std::size_t, 2> n_cells);

inline Grid build_uniform_grid_1d(double lo, double hi, std::size_t n) {
  return build_uniform_grid(1, Bounds{{lo, 0.0}, {hi, 1.0}}, {n, 1});
}

/// Sum of w_j * field_j in ascending cell order.
double integrate(const Grid& grid, const Field& field);

/// Weighted sum restricted to the cells where mask is true.
double integrate_over(const Grid& grid, const Field& field,
                      const std::vector<bool>& mask);

double sup_norm(const Field& field);
double weighted_l1_norm(const Grid& grid, const Field& field);

}  // namespace migepi
