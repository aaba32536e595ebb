#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "migepi/grid.hpp"

namespace migepi {

/// v(x, y): rate density of moving from departure y to arrival x.
using KernelFunction = std::function<double(const Point& x, const Point& y)>;
/// A function of a single location, e.g. a destination profile or a rate.
using Profile = std::function<double(const Point& x)>;

/// Discretized migration kernel on a grid.
///
/// v(i, j) is the rate density from departure cell j to arrival cell i. The
/// emigration and immigration rates are always derived from v by weighted
/// column and row sums, which makes the discrete generator conserve mass to
/// round-off.
class KernelData {
 public:
  const Grid& grid() const noexcept { return grid_; }
  const Matrix& v() const noexcept { return v_; }
  const Field& emigration() const noexcept { return v_e_; }
  const Field& immigration() const noexcept { return v_i_; }
  double support_eps() const noexcept { return support_eps_; }
  std::size_t size() const noexcept { return grid_.size(); }

  bool has_edge(std::size_t to, std::size_t from) const {
    return v_(static_cast<Eigen::Index>(to), static_cast<Eigen::Index>(from)) > support_eps_;
  }

 private:
  friend KernelData build_kernel(const Grid&, const Matrix&, double);

  Grid grid_;
  Matrix v_;
  Field v_e_;
  Field v_i_;
  double support_eps_ = 0.0;
};

/// Copies a dense matrix (row = arrival cell, column = departure cell).
/// Throws NegativeValue, NonFinite or DimensionMismatch.
KernelData build_kernel(const Grid& grid, const Matrix& v, double support_eps = 0.0);

/// Samples v at every pair of cell centers.
KernelData build_kernel(const Grid& grid, const KernelFunction& v,
                        double support_eps = 0.0);

/// Principal submatrix on the given cells, in the given order.
Matrix restrict_matrix(const Matrix& m, const std::vector<std::size_t>& cells);

enum class BalanceClass { Symmetric, Balanced, Unbalanced };

struct BalanceReport {
  BalanceClass classification = BalanceClass::Unbalanced;
  double deviation = 0.0;  // max_j |v_i[j] - v_e[j]|
};

const char* to_string(BalanceClass c) noexcept;

/// tol is relative to max(|v|_inf * |Omega|, 1e-300).
BalanceReport classify_balance(const KernelData& k, double tol = 1e-12);

enum class ErgodicClass { CompletelyErgodic, Ergodic, Separable, OneWay, Other };

const char* to_string(ErgodicClass c) noexcept;

struct ErgodicityReport {
  bool is_ergodic = false;
  /// Strongly connected components of the support digraph (edge j -> i iff
  /// v(i, j) > support_eps), each sorted ascending, ordered by smallest member.
  std::vector<std::vector<std::size_t>> components;
  /// component_of[i] is the index into components holding cell i.
  std::vector<std::size_t> component_of;
  /// Edges (from, to) of the condensation DAG, sorted, without duplicates.
  std::vector<std::pair<std::size_t, std::size_t>> reachability;
  ErgodicClass classification = ErgodicClass::Other;
};

ErgodicityReport ergodicity_report(const KernelData& k);

/// Strongly connected components of the digraph on n nodes with edge j -> i
/// whenever edge(i, j) is true. Components are ordered by smallest member.
std::vector<std::vector<std::size_t>> strongly_connected_components(
    std::size_t n, const std::function<bool(std::size_t to, std::size_t from)>& edge);

// Builtin kernels ------------------------------------------------------------

KernelData constant_kernel(const Grid& grid, double c);

/// v(x, y) = profile(x), independent of the departure location.
KernelData destination_only_kernel(const Grid& grid, const Profile& profile);

/// v(x, y) = profiles[blocks[j]](x) for departure cell j. blocks holds the
/// block index of every cell.
KernelData piecewise_semi_constant_kernel(const Grid& grid,
                                          const std::vector<std::size_t>& blocks,
                                          const std::vector<Profile>& profiles);

/// height on |x - y| < radius, floor elsewhere.
KernelData coville_kernel(const Grid& grid, double height, double radius,
                          double floor = 0.0);

/// height where the first coordinates satisfy lo <= x + y <= hi for one of
/// the bands, zero elsewhere.
KernelData banded_sum_kernel(const Grid& grid, double height,
                             const std::vector<std::pair<double, double>>& bands);

/// Block index per cell for the breakpoints along the first axis:
/// block k holds cells with breaks[k-1] <= x < breaks[k].
std::vector<std::size_t> blocks_from_breakpoints(const Grid& grid,
                                                 const std::vector<double>& breaks);

/// Dense kernel CSV: header "# kernel n=<cells>", then one row per arrival
/// cell with comma-separated entries per departure cell.
Matrix read_kernel_csv(const std::string& path);
void write_kernel_csv(const std::string& path, const Matrix& v);

}  // namespace migepi
