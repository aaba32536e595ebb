#ifndef MIGEPI_H
#define MIGEPI_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(MIGEPI_BUILDING_LIBRARY)
#    define MIGEPI_API __declspec(dllexport)
#  else
#    define MIGEPI_API __declspec(dllimport)
#  endif
#else
#  define MIGEPI_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes returned by every function that can fail. */
enum {
  MIGEPI_OK = 0,
  MIGEPI_INVALID_ARGUMENT = 1,
  MIGEPI_DIMENSION_MISMATCH = 2,
  MIGEPI_NEGATIVE_VALUE = 3,
  MIGEPI_NON_FINITE = 4,
  MIGEPI_NOT_ERGODIC = 5,
  MIGEPI_ZERO_EMIGRATION = 6,
  MIGEPI_DOMINANCE_NOT_ESTABLISHED = 7,
  MIGEPI_SINGULAR_SHIFT = 8,
  MIGEPI_NOT_SEMI_CONSTANT = 9,
  MIGEPI_REDUCIBLE_BLOCKS = 10,
  MIGEPI_WRONG_CLASSIFICATION = 11,
  MIGEPI_ALREADY_CONVERGED = 12,
  MIGEPI_NON_MONOTONE = 13,
  MIGEPI_STEP_FAILURE = 14,
  MIGEPI_BRACKET_FAILURE = 15,
  MIGEPI_CONFIG_ERROR = 16,
  MIGEPI_IO_ERROR = 17,
  MIGEPI_INTERNAL = 99
};

/* Ergodicity classes reported by migepi_kernel_ergodicity. */
enum {
  MIGEPI_COMPLETELY_ERGODIC = 0,
  MIGEPI_ERGODIC = 1,
  MIGEPI_SEPARABLE = 2,
  MIGEPI_ONE_WAY = 3,
  MIGEPI_OTHER = 4
};

typedef struct migepi_grid migepi_grid;
typedef struct migepi_kernel migepi_kernel;
typedef struct migepi_scenario migepi_scenario;
typedef struct migepi_report migepi_report;

MIGEPI_API const char* migepi_version(void);
MIGEPI_API const char* migepi_status_name(int status);
/* Message of the last failure on the calling thread; empty after success. */
MIGEPI_API const char* migepi_last_error(void);
/* "trace", "debug", "info", "warn", "error", "off". */
MIGEPI_API int migepi_set_log_level(const char* level);

/* Grids. lo, hi and n_cells hold dim entries. */
MIGEPI_API int migepi_grid_create(int dim, const double* lo, const double* hi,
                                  const size_t* n_cells, migepi_grid** out);
MIGEPI_API void migepi_grid_destroy(migepi_grid* grid);
MIGEPI_API size_t migepi_grid_size(const migepi_grid* grid);
MIGEPI_API int migepi_grid_weights(const migepi_grid* grid, double* out, size_t len);
/* Cell centers, two coordinates per cell (the second is 0 in 1D). */
MIGEPI_API int migepi_grid_centers(const migepi_grid* grid, double* out, size_t len);

/* Kernels. v is row-major n x n with v[i * n + j] the rate from cell j to
   cell i. The kernel keeps its own copy of the grid. */
MIGEPI_API int migepi_kernel_from_matrix(const migepi_grid* grid, const double* v, size_t n,
                                         double support_eps, migepi_kernel** out);
MIGEPI_API int migepi_kernel_constant(const migepi_grid* grid, double c, migepi_kernel** out);
MIGEPI_API void migepi_kernel_destroy(migepi_kernel* kernel);
MIGEPI_API size_t migepi_kernel_size(const migepi_kernel* kernel);
MIGEPI_API int migepi_kernel_emigration(const migepi_kernel* kernel, double* out, size_t len);
MIGEPI_API int migepi_kernel_ergodicity(const migepi_kernel* kernel, int* classification,
                                        size_t* n_components);

/* Unit-mass steady profile and spectral gap of the migration generator. */
MIGEPI_API int migepi_steady_state(const migepi_kernel* kernel, double* n_star, size_t len,
                                   double* gap);
/* Spectral bound with proliferation r (may be NULL for r = 0). dominant is
   set to 1 when s is a strictly dominant simple eigenvalue. */
MIGEPI_API int migepi_spectral_bound(const migepi_kernel* kernel, const double* r, size_t len,
                                     double* s, int* dominant);
/* Writes n_snapshots fields of len values each, at evenly spaced times from
   0 to t_final. r may be NULL. */
MIGEPI_API int migepi_evolve_linear(const migepi_kernel* kernel, const double* r,
                                    const double* n0, size_t len, double t_final,
                                    size_t n_snapshots, double* out);

MIGEPI_API int migepi_sire_threshold(const migepi_kernel* kernel, double a, double b, double m0,
                                     double* r_star);
/* S, I, R receive len values each. */
MIGEPI_API int migepi_sire_endemic(const migepi_kernel* kernel, double r, double a, double b,
                                   double m0, double* s, double* i, double* rec, size_t len,
                                   int* converged, double* residual);

/* Scenarios. */
MIGEPI_API int migepi_scenario_load(const char* path, migepi_scenario** out);
MIGEPI_API int migepi_scenario_parse(const char* json_text, const char* base_dir,
                                     migepi_scenario** out);
MIGEPI_API void migepi_scenario_destroy(migepi_scenario* scenario);
MIGEPI_API int migepi_scenario_set_output_dir(migepi_scenario* scenario, const char* dir);
MIGEPI_API int migepi_scenario_set_seed(migepi_scenario* scenario, uint64_t seed);
MIGEPI_API int migepi_scenario_set_tolerance_scale(migepi_scenario* scenario, double scale);
MIGEPI_API int migepi_scenario_run(const migepi_scenario* scenario, migepi_report** out);
/* The returned string is owned by the caller; release it with migepi_string_free. */
MIGEPI_API int migepi_scenario_describe_kernel(const migepi_scenario* scenario, char** out);
MIGEPI_API void migepi_string_free(char* text);

MIGEPI_API void migepi_report_destroy(migepi_report* report);
MIGEPI_API int migepi_report_all_passed(const migepi_report* report);
MIGEPI_API const char* migepi_report_text(const migepi_report* report);
MIGEPI_API size_t migepi_report_check_count(const migepi_report* report);
MIGEPI_API int migepi_report_check(const migepi_report* report, size_t index, const char** name,
                                   int* passed, double* measured, double* tolerance,
                                   const char** detail);
MIGEPI_API size_t migepi_report_artifact_count(const migepi_report* report);
MIGEPI_API const char* migepi_report_artifact(const migepi_report* report, size_t index);

/* Catalog of named checks. */
MIGEPI_API size_t migepi_check_count(void);
MIGEPI_API int migepi_check_info(size_t index, const char** name, const char** description,
                                 double* tolerance, const char** anchor);

#ifdef __cplusplus
}
#endif

#endif
