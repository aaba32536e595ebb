#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "migepi/migepi.h"

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

int exit_code_for(int status) {
  return status == MIGEPI_CONFIG_ERROR || status == MIGEPI_IO_ERROR ? kExitConfig : kExitNumeric;
}

int report_failure(int status) {
  std::fprintf(stderr, "error (%s): %s\n", migepi_status_name(status), migepi_last_error());
  return exit_code_for(status);
}

struct Common {
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
  double tolerance_scale = 1.0;
};

int load(const std::string& path, const Common& common, migepi_scenario** out) {
  int st = migepi_scenario_load(path.c_str(), out);
  if (st != MIGEPI_OK) return st;
  if (common.output_dir) st = migepi_scenario_set_output_dir(*out, common.output_dir->c_str());
  if (st == MIGEPI_OK && common.seed) st = migepi_scenario_set_seed(*out, *common.seed);
  if (st == MIGEPI_OK) st = migepi_scenario_set_tolerance_scale(*out, common.tolerance_scale);
  return st;
}

int run(const std::string& path, const Common& common) {
  migepi_scenario* scenario = nullptr;
  int st = load(path, common, &scenario);
  if (st != MIGEPI_OK) {
    migepi_scenario_destroy(scenario);
    return report_failure(st);
  }
  migepi_report* report = nullptr;
  st = migepi_scenario_run(scenario, &report);
  migepi_scenario_destroy(scenario);
  if (st != MIGEPI_OK) return report_failure(st);

  std::fputs(migepi_report_text(report), stdout);
  for (size_t i = 0; i < migepi_report_artifact_count(report); ++i) {
    std::printf("wrote %s\n", migepi_report_artifact(report, i));
  }
  const bool passed = migepi_report_all_passed(report) != 0;
  migepi_report_destroy(report);
  return passed ? 0 : kExitCheckFailed;
}

int describe(const std::string& path, const Common& common) {
  migepi_scenario* scenario = nullptr;
  int st = load(path, common, &scenario);
  char* text = nullptr;
  if (st == MIGEPI_OK) st = migepi_scenario_describe_kernel(scenario, &text);
  migepi_scenario_destroy(scenario);
  if (st != MIGEPI_OK) return report_failure(st);
  std::fputs(text, stdout);
  migepi_string_free(text);
  return 0;
}

int list_checks() {
  for (size_t i = 0; i < migepi_check_count(); ++i) {
    const char *name = nullptr, *description = nullptr, *anchor = nullptr;
    double tolerance = 0;
    migepi_check_info(i, &name, &description, &tolerance, &anchor);
    std::printf("%-20s tol=%-8g [%s] %s\n", name, tolerance, anchor, description);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* level = std::getenv("MIGEPI_LOG_LEVEL")) {
    if (migepi_set_log_level(level) != MIGEPI_OK) {
      std::fprintf(stderr, "ignoring MIGEPI_LOG_LEVEL: %s\n", migepi_last_error());
    }
  } else {
    migepi_set_log_level("warn");
  }

  CLI::App app{"Population migration and epidemic scenario runner"};
  app.set_version_flag("--version", std::string(migepi_version()));
  app.require_subcommand(1);

  Common common;
  std::string config;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--output-dir", common.output_dir, "Directory for CSV artifacts");
    sub->add_option("--seed", common.seed, "Seed offset for random kernels and fields");
    sub->add_option("--tolerance-scale", common.tolerance_scale, "Multiplier on check tolerances")
        ->check(CLI::PositiveNumber);
  };

  CLI::App* run_cmd = app.add_subcommand("run", "Run a scenario and its checks");
  run_cmd->add_option("config", config, "Scenario JSON file")->required();
  add_common(run_cmd);

  app.add_subcommand("checks", "List the named checks");

  CLI::App* describe_cmd =
      app.add_subcommand("describe-kernel", "Print the ergodicity report of a scenario kernel");
  describe_cmd->add_option("config", config, "Scenario JSON file")->required();
  add_common(describe_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (run_cmd->parsed()) return run(config, common);
  if (describe_cmd->parsed()) return describe(config, common);
  return list_checks();
}
