#include "migepi/migepi.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>

#include <spdlog/spdlog.h>

#include "migepi/epidemics.hpp"
#include "migepi/error.hpp"
#include "migepi/scenario.hpp"

struct migepi_grid {
  migepi::Grid grid;
};

struct migepi_kernel {
  std::shared_ptr<const migepi::KernelData> data;
};

struct migepi_scenario {
  migepi::Scenario scenario;
  migepi::RunOptions options;
};

struct migepi_report {
  migepi::ScenarioReport report;
};

namespace {

thread_local std::string last_error;

int status(migepi::ErrorCode code) { return static_cast<int>(code); }

int record(int code, const std::string& what) {
  last_error = what;
  return code;
}

// Runs body and converts exceptions into status codes.
template <class F>
int guarded(F&& body) {
  last_error.clear();
  try {
    body();
    return MIGEPI_OK;
  } catch (const migepi::Error& e) {
    return record(status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return record(MIGEPI_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return record(MIGEPI_INTERNAL, e.what());
  } catch (...) {
    return record(MIGEPI_INTERNAL, "unknown exception");
  }
}

void require(bool ok, const char* what) {
  if (!ok) migepi::fail(migepi::ErrorCode::InvalidArgument, what);
}

void require_len(size_t len, size_t expected) {
  if (len != expected) {
    migepi::fail(migepi::ErrorCode::DimensionMismatch,
                 "buffer holds " + std::to_string(len) + " values, expected " +
                     std::to_string(expected));
  }
}

migepi::Field copy_field(const double* p, size_t len) {
  migepi::Field f(static_cast<Eigen::Index>(len));
  for (size_t i = 0; i < len; ++i) f[static_cast<Eigen::Index>(i)] = p[i];
  return f;
}

void store(const migepi::Field& f, double* out) {
  for (Eigen::Index i = 0; i < f.size(); ++i) out[i] = f[i];
}

char* duplicate(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* migepi_version(void) { return "1.0.0"; }

const char* migepi_status_name(int code) {
  return migepi::to_string(static_cast<migepi::ErrorCode>(code));
}

const char* migepi_last_error(void) { return last_error.c_str(); }

int migepi_set_log_level(const char* level) {
  return guarded([&] {
    require(level != nullptr, "level is null");
    const auto lvl = spdlog::level::from_str(level);
    if (lvl == spdlog::level::off && std::string(level) != "off") {
      migepi::fail(migepi::ErrorCode::InvalidArgument,
                   std::string("unknown log level '") + level + "'");
    }
    spdlog::set_level(lvl);
  });
}

int migepi_grid_create(int dim, const double* lo, const double* hi, const size_t* n_cells,
                       migepi_grid** out) {
  return guarded([&] {
    require(lo && hi && n_cells && out, "null argument");
    require(dim == 1 || dim == 2, "dim must be 1 or 2");
    migepi::Bounds b;
    std::array<std::size_t, 2> n{1, 1};
    for (int d = 0; d < dim; ++d) {
      b.lo[d] = lo[d];
      b.hi[d] = hi[d];
      n[d] = n_cells[d];
    }
    *out = new migepi_grid{migepi::build_uniform_grid(dim, b, n)};
  });
}

void migepi_grid_destroy(migepi_grid* grid) { delete grid; }

size_t migepi_grid_size(const migepi_grid* grid) { return grid ? grid->grid.size() : 0; }

int migepi_grid_weights(const migepi_grid* grid, double* out, size_t len) {
  return guarded([&] {
    require(grid && out, "null argument");
    require_len(len, grid->grid.size());
    store(grid->grid.weights(), out);
  });
}

int migepi_grid_centers(const migepi_grid* grid, double* out, size_t len) {
  return guarded([&] {
    require(grid && out, "null argument");
    require_len(len, 2 * grid->grid.size());
    for (size_t i = 0; i < grid->grid.size(); ++i) {
      out[2 * i] = grid->grid.center(i)[0];
      out[2 * i + 1] = grid->grid.dim() == 2 ? grid->grid.center(i)[1] : 0.0;
    }
  });
}

int migepi_kernel_from_matrix(const migepi_grid* grid, const double* v, size_t n,
                              double support_eps, migepi_kernel** out) {
  return guarded([&] {
    require(grid && v && out, "null argument");
    require_len(n, grid->grid.size());
    const auto m = static_cast<Eigen::Index>(n);
    const migepi::Matrix mat =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            v, m, m);
    *out = new migepi_kernel{std::make_shared<const migepi::KernelData>(
        migepi::build_kernel(grid->grid, mat, support_eps))};
  });
}

int migepi_kernel_constant(const migepi_grid* grid, double c, migepi_kernel** out) {
  return guarded([&] {
    require(grid && out, "null argument");
    *out = new migepi_kernel{
        std::make_shared<const migepi::KernelData>(migepi::constant_kernel(grid->grid, c))};
  });
}

void migepi_kernel_destroy(migepi_kernel* kernel) { delete kernel; }

size_t migepi_kernel_size(const migepi_kernel* kernel) {
  return kernel ? kernel->data->size() : 0;
}

int migepi_kernel_emigration(const migepi_kernel* kernel, double* out, size_t len) {
  return guarded([&] {
    require(kernel && out, "null argument");
    require_len(len, kernel->data->size());
    store(kernel->data->emigration(), out);
  });
}

int migepi_kernel_ergodicity(const migepi_kernel* kernel, int* classification,
                             size_t* n_components) {
  return guarded([&] {
    require(kernel && classification, "null argument");
    const migepi::ErgodicityReport rep = migepi::ergodicity_report(*kernel->data);
    *classification = static_cast<int>(rep.classification);
    if (n_components) *n_components = rep.components.size();
  });
}

int migepi_steady_state(const migepi_kernel* kernel, double* n_star, size_t len, double* gap) {
  return guarded([&] {
    require(kernel && n_star, "null argument");
    require_len(len, kernel->data->size());
    const migepi::SpectralSummary ss = migepi::steady_state(*kernel->data);
    store(ss.n_star, n_star);
    if (gap) *gap = ss.gap;
  });
}

int migepi_spectral_bound(const migepi_kernel* kernel, const double* r, size_t len, double* s,
                          int* dominant) {
  return guarded([&] {
    require(kernel && s, "null argument");
    require_len(len, kernel->data->size());
    const migepi::Field rf =
        r ? copy_field(r, len) : migepi::Field::Zero(static_cast<Eigen::Index>(len));
    const migepi::SpectralSummary sb =
        migepi::spectral_bound(migepi::build_generator(kernel->data, rf));
    *s = sb.s;
    if (dominant) *dominant = sb.dominant_simple ? 1 : 0;
  });
}

int migepi_evolve_linear(const migepi_kernel* kernel, const double* r, const double* n0,
                         size_t len, double t_final, size_t n_snapshots, double* out) {
  return guarded([&] {
    require(kernel && n0 && out, "null argument");
    require_len(len, kernel->data->size());
    const migepi::Field rf =
        r ? copy_field(r, len) : migepi::Field::Zero(static_cast<Eigen::Index>(len));
    const migepi::Trajectory traj = migepi::evolve_linear(
        migepi::build_generator(kernel->data, rf), copy_field(n0, len), t_final, n_snapshots);
    for (size_t k = 0; k < traj.snapshots.size(); ++k) {
      store(traj.snapshots[k].values, out + k * len);
    }
  });
}

int migepi_sire_threshold(const migepi_kernel* kernel, double a, double b, double m0,
                          double* r_star) {
  return guarded([&] {
    require(kernel && r_star, "null argument");
    *r_star = migepi::sire_threshold(*kernel->data, {0.0, a, b}, m0).r_star;
  });
}

int migepi_sire_endemic(const migepi_kernel* kernel, double r, double a, double b, double m0,
                        double* s, double* i, double* rec, size_t len, int* converged,
                        double* residual) {
  return guarded([&] {
    require(kernel && s && i && rec, "null argument");
    require_len(len, kernel->data->size());
    const migepi::EndemicSolution sol =
        migepi::sire_endemic_state(*kernel->data, {r, a, b}, m0, r);
    store(sol.S_r, s);
    store(sol.I_r, i);
    store(sol.R_r, rec);
    if (converged) *converged = sol.converged ? 1 : 0;
    if (residual) *residual = sol.residual;
  });
}

int migepi_scenario_load(const char* path, migepi_scenario** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = new migepi_scenario{migepi::Scenario::from_file(path), {}};
  });
}

int migepi_scenario_parse(const char* json_text, const char* base_dir, migepi_scenario** out) {
  return guarded([&] {
    require(json_text && out, "null argument");
    *out = new migepi_scenario{
        migepi::Scenario::from_text(json_text, base_dir ? base_dir : "."), {}};
  });
}

void migepi_scenario_destroy(migepi_scenario* scenario) { delete scenario; }

int migepi_scenario_set_output_dir(migepi_scenario* scenario, const char* dir) {
  return guarded([&] {
    require(scenario && dir, "null argument");
    scenario->options.output_dir = dir;
  });
}

int migepi_scenario_set_seed(migepi_scenario* scenario, uint64_t seed) {
  return guarded([&] {
    require(scenario, "null argument");
    scenario->options.seed = seed;
  });
}

int migepi_scenario_set_tolerance_scale(migepi_scenario* scenario, double scale) {
  return guarded([&] {
    require(scenario, "null argument");
    require(scale > 0.0, "tolerance scale must be positive");
    scenario->options.tolerance_scale = scale;
  });
}

int migepi_scenario_run(const migepi_scenario* scenario, migepi_report** out) {
  return guarded([&] {
    require(scenario && out, "null argument");
    *out = new migepi_report{scenario->scenario.run(scenario->options)};
  });
}

int migepi_scenario_describe_kernel(const migepi_scenario* scenario, char** out) {
  return guarded([&] {
    require(scenario && out, "null argument");
    *out = duplicate(scenario->scenario.describe_kernel(scenario->options));
  });
}

void migepi_string_free(char* text) { std::free(text); }

void migepi_report_destroy(migepi_report* report) { delete report; }

int migepi_report_all_passed(const migepi_report* report) {
  return report && report->report.all_passed() ? 1 : 0;
}

const char* migepi_report_text(const migepi_report* report) {
  return report ? report->report.text.c_str() : "";
}

size_t migepi_report_check_count(const migepi_report* report) {
  return report ? report->report.checks.size() : 0;
}

int migepi_report_check(const migepi_report* report, size_t index, const char** name,
                        int* passed, double* measured, double* tolerance, const char** detail) {
  return guarded([&] {
    require(report != nullptr, "null argument");
    require(index < report->report.checks.size(), "check index out of range");
    const migepi::CheckOutcome& c = report->report.checks[index];
    if (name) *name = c.name.c_str();
    if (passed) *passed = c.passed ? 1 : 0;
    if (measured) *measured = c.measured;
    if (tolerance) *tolerance = c.tolerance;
    if (detail) *detail = c.detail.c_str();
  });
}

size_t migepi_report_artifact_count(const migepi_report* report) {
  return report ? report->report.artifacts.size() : 0;
}

const char* migepi_report_artifact(const migepi_report* report, size_t index) {
  if (!report || index >= report->report.artifacts.size()) return nullptr;
  return report->report.artifacts[index].c_str();
}

size_t migepi_check_count(void) { return migepi::check_catalog().size(); }

int migepi_check_info(size_t index, const char** name, const char** description,
                      double* tolerance, const char** anchor) {
  return guarded([&] {
    const auto& cat = migepi::check_catalog();
    require(index < cat.size(), "check index out of range");
    if (name) *name = cat[index].name.c_str();
    if (description) *description = cat[index].description.c_str();
    if (tolerance) *tolerance = cat[index].tolerance;
    if (anchor) *anchor = cat[index].anchor.c_str();
  });
}

}  // extern "C"
