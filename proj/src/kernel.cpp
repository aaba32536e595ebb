#include "migepi/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "migepi/csv.hpp"
#include "migepi/error.hpp"

namespace migepi {

namespace {

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

}  // namespace

KernelData build_kernel(const Grid& grid, const Matrix& v, double support_eps) {
  const auto n = idx(grid.size());
  if (v.rows() != n || v.cols() != n) {
    fail(ErrorCode::DimensionMismatch,
         "kernel matrix is " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()) +
             ", grid has " + std::to_string(n) + " cells");
  }
  if (!(support_eps >= 0.0) || !std::isfinite(support_eps)) {
    fail(ErrorCode::InvalidArgument, "support_eps must be finite and nonnegative");
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = v(i, j);
      if (!std::isfinite(x)) {
        fail(ErrorCode::NonFinite, "kernel entry (" + std::to_string(i) + "," +
                                       std::to_string(j) + ") is not finite");
      }
      if (x < 0.0) {
        fail(ErrorCode::NegativeValue, "kernel entry (" + std::to_string(i) + "," +
                                           std::to_string(j) + ") is negative");
      }
    }
  }

  KernelData k;
  k.grid_ = grid;
  k.v_ = v;
  k.support_eps_ = support_eps;
  const Field& w = grid.weights();
  k.v_e_.resize(n);
  k.v_i_.resize(n);
  // Fixed summation order: ascending index.
  for (Eigen::Index j = 0; j < n; ++j) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += w[i] * v(i, j);
    k.v_e_[j] = s;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) s += w[j] * v(i, j);
    k.v_i_[i] = s;
  }
  return k;
}

KernelData build_kernel(const Grid& grid, const KernelFunction& v, double support_eps) {
  const auto n = idx(grid.size());
  Matrix m(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      m(i, j) = v(grid.center(static_cast<std::size_t>(i)),
                  grid.center(static_cast<std::size_t>(j)));
    }
  }
  return build_kernel(grid, m, support_eps);
}

Matrix restrict_matrix(const Matrix& m, const std::vector<std::size_t>& cells) {
  const auto n = idx(cells.size());
  Matrix out(n, n);
  for (Eigen::Index b = 0; b < n; ++b) {
    for (Eigen::Index a = 0; a < n; ++a) {
      out(a, b) = m(idx(cells[static_cast<std::size_t>(a)]),
                    idx(cells[static_cast<std::size_t>(b)]));
    }
  }
  return out;
}

const char* to_string(BalanceClass c) noexcept {
  switch (c) {
    case BalanceClass::Symmetric: return "symmetric";
    case BalanceClass::Balanced: return "balanced";
    case BalanceClass::Unbalanced: return "unbalanced";
  }
  return "?";
}

const char* to_string(ErgodicClass c) noexcept {
  switch (c) {
    case ErgodicClass::CompletelyErgodic: return "completely_ergodic";
    case ErgodicClass::Ergodic: return "ergodic";
    case ErgodicClass::Separable: return "separable";
    case ErgodicClass::OneWay: return "one_way";
    case ErgodicClass::Other: return "other";
  }
  return "?";
}

BalanceReport classify_balance(const KernelData& k, double tol) {
  BalanceReport rep;
  rep.deviation = (k.immigration() - k.emigration()).cwiseAbs().maxCoeff();
  const Matrix& v = k.v();
  const double vmax = v.cwiseAbs().maxCoeff();
  const double scale = std::max(vmax * k.grid().total_volume(), 1e-300);

  bool symmetric = true;
  const Field& w = k.grid().weights();
  const bool uniform_weights = (w.array() == w[0]).all();
  for (Eigen::Index j = 0; j < v.cols() && symmetric; ++j) {
    for (Eigen::Index i = j + 1; i < v.rows(); ++i) {
      if (std::abs(v(i, j) - v(j, i)) > tol * std::max(vmax, 1e-300)) {
        symmetric = false;
        break;
      }
    }
  }
  if (symmetric && uniform_weights) {
    rep.classification = BalanceClass::Symmetric;
  } else if (rep.deviation <= tol * scale) {
    rep.classification = BalanceClass::Balanced;
  } else {
    rep.classification = BalanceClass::Unbalanced;
  }
  return rep;
}

std::vector<std::vector<std::size_t>> strongly_connected_components(
    std::size_t n, const std::function<bool(std::size_t to, std::size_t from)>& edge) {
  // Adjacency lists: out[j] lists i with an edge j -> i.
  std::vector<std::vector<std::size_t>> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      if (i != j && edge(i, j)) out[j].push_back(i);
    }
  }

  // Iterative Tarjan.
  constexpr std::size_t unvisited = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(n, unvisited), low(n, 0);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::vector<std::vector<std::size_t>> comps;
  std::size_t counter = 0;

  struct Frame {
    std::size_t node;
    std::size_t next_edge;
  };
  std::vector<Frame> call;

  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != unvisited) continue;
    call.push_back({root, 0});
    index[root] = low[root] = counter++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      Frame& f = call.back();
      const std::size_t u = f.node;
      if (f.next_edge < out[u].size()) {
        const std::size_t w = out[u][f.next_edge++];
        if (index[w] == unvisited) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, 0});
        } else if (on_stack[w]) {
          low[u] = std::min(low[u], index[w]);
        }
        continue;
      }
      if (low[u] == index[u]) {
        std::vector<std::size_t> comp;
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp.push_back(w);
        } while (w != u);
        std::sort(comp.begin(), comp.end());
        comps.push_back(std::move(comp));
      }
      call.pop_back();
      if (!call.empty()) {
        const std::size_t parent = call.back().node;
        low[parent] = std::min(low[parent], low[u]);
      }
    }
  }
  std::sort(comps.begin(), comps.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return comps;
}

ErgodicityReport ergodicity_report(const KernelData& k) {
  const std::size_t n = k.size();
  ErgodicityReport rep;
  rep.components = strongly_connected_components(
      n, [&](std::size_t to, std::size_t from) { return k.has_edge(to, from); });
  rep.component_of.assign(n, 0);
  for (std::size_t c = 0; c < rep.components.size(); ++c) {
    for (std::size_t i : rep.components[c]) rep.component_of[i] = c;
  }

  std::set<std::pair<std::size_t, std::size_t>> dag;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t cj = rep.component_of[j];
      const std::size_t ci = rep.component_of[i];
      if (ci != cj && k.has_edge(i, j)) dag.emplace(cj, ci);
    }
  }
  rep.reachability.assign(dag.begin(), dag.end());
  rep.is_ergodic = rep.components.size() == 1;

  if (rep.is_ergodic) {
    const bool all_positive = (k.v().array() > k.support_eps()).all();
    rep.classification =
        all_positive ? ErgodicClass::CompletelyErgodic : ErgodicClass::Ergodic;
  } else if (rep.reachability.empty()) {
    rep.classification = ErgodicClass::Separable;
  } else if (rep.components.size() == 2) {
    // Two components with at least one cross edge: the DAG forbids a cycle,
    // so the edges all run one way.
    rep.classification = ErgodicClass::OneWay;
  } else {
    rep.classification = ErgodicClass::Other;
  }
  return rep;
}

KernelData constant_kernel(const Grid& grid, double c) {
  const auto n = idx(grid.size());
  return build_kernel(grid, Matrix::Constant(n, n, c));
}

KernelData destination_only_kernel(const Grid& grid, const Profile& profile) {
  return build_kernel(grid, [&](const Point& x, const Point&) { return profile(x); });
}

KernelData piecewise_semi_constant_kernel(const Grid& grid,
                                          const std::vector<std::size_t>& blocks,
                                          const std::vector<Profile>& profiles) {
  if (blocks.size() != grid.size()) {
    fail(ErrorCode::DimensionMismatch, "block assignment length does not match grid");
  }
  const auto n = idx(grid.size());
  Matrix m(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const std::size_t b = blocks[static_cast<std::size_t>(j)];
    if (b >= profiles.size()) {
      fail(ErrorCode::InvalidArgument, "block index " + std::to_string(b) + " has no profile");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      m(i, j) = profiles[b](grid.center(static_cast<std::size_t>(i)));
    }
  }
  return build_kernel(grid, m);
}

KernelData coville_kernel(const Grid& grid, double height, double radius, double floor) {
  if (!(radius > 0.0)) fail(ErrorCode::InvalidArgument, "coville radius must be positive");
  return build_kernel(grid, [&](const Point& x, const Point& y) {
    const double dx = x[0] - y[0];
    const double dy = grid.dim() == 2 ? x[1] - y[1] : 0.0;
    return std::sqrt(dx * dx + dy * dy) < radius ? height : floor;
  });
}

KernelData banded_sum_kernel(const Grid& grid, double height,
                             const std::vector<std::pair<double, double>>& bands) {
  return build_kernel(grid, [&](const Point& x, const Point& y) {
    const double s = x[0] + y[0];
    for (const auto& [lo, hi] : bands) {
      if (lo <= s && s <= hi) return height;
    }
    return 0.0;
  });
}

std::vector<std::size_t> blocks_from_breakpoints(const Grid& grid,
                                                 const std::vector<double>& breaks) {
  if (!std::is_sorted(breaks.begin(), breaks.end())) {
    fail(ErrorCode::InvalidArgument, "breakpoints must be ascending");
  }
  std::vector<std::size_t> blocks(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double x = grid.center(i)[0];
    blocks[i] = static_cast<std::size_t>(
        std::upper_bound(breaks.begin(), breaks.end(), x) - breaks.begin());
  }
  return blocks;
}

Matrix read_kernel_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open kernel file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::IoError, "kernel file '" + path + "' is empty");
  const std::string_view head = csv::trim(line);
  constexpr std::string_view prefix = "# kernel n=";
  if (head.substr(0, prefix.size()) != prefix) {
    fail(ErrorCode::IoError, "kernel file '" + path + "' lacks the '# kernel n=<cells>' header");
  }
  const double nd = csv::parse_double(head.substr(prefix.size()));
  if (!(nd >= 1.0) || nd != std::floor(nd)) {
    fail(ErrorCode::IoError, "kernel file '" + path + "' has a bad cell count");
  }
  const auto n = static_cast<Eigen::Index>(nd);
  Matrix m(n, n);
  Eigen::Index row = 0;
  while (std::getline(in, line)) {
    const std::string_view t = csv::trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (row >= n) fail(ErrorCode::IoError, "kernel file '" + path + "' has too many rows");
    const auto fields = csv::split(t);
    if (static_cast<Eigen::Index>(fields.size()) != n) {
      fail(ErrorCode::IoError, "kernel file '" + path + "' row " + std::to_string(row) +
                                   " has " + std::to_string(fields.size()) + " entries");
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      m(row, j) = csv::parse_double(fields[static_cast<std::size_t>(j)]);
    }
    ++row;
  }
  if (row != n) fail(ErrorCode::IoError, "kernel file '" + path + "' has too few rows");
  return m;
}

void write_kernel_csv(const std::string& path, const Matrix& v) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write kernel file '" + path + "'");
  out << "# kernel n=" << v.rows() << '\n';
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
      if (j) out << ',';
      out << csv::format_double(v(i, j));
    }
    out << '\n';
  }
}

}  // namespace migepi
