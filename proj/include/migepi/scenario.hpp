#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "migepi/checks.hpp"

namespace migepi {

struct RunOptions {
  std::optional<std::string> output_dir;  // overrides the config's output_dir
  std::optional<std::uint64_t> seed;      // overrides seeds of random kernels and fields
  double tolerance_scale = 1.0;           // multiplies every check tolerance
};

struct ScenarioReport {
  std::string model;
  std::vector<CheckOutcome> checks;
  std::vector<std::string> artifacts;  // files written, in order
  std::string text;                    // human-readable summary

  bool all_passed() const;
};

/// A validated JSON scenario. Parsing errors throw ConfigError naming the
/// offending field; missing referenced files throw IoError.
class Scenario {
 public:
  static Scenario from_file(const std::string& path);
  /// Relative paths inside the config are resolved against base_dir.
  static Scenario from_text(const std::string& text, const std::string& base_dir = ".");

  Scenario(Scenario&&) noexcept;
  Scenario& operator=(Scenario&&) noexcept;
  ~Scenario();

  const std::string& model_name() const;
  const std::vector<std::string>& requested_checks() const;

  /// Runs the model, writes the CSV artifacts and the checks report.
  ScenarioReport run(const RunOptions& opts = {}) const;

  /// Ergodicity and balance report of the configured kernel.
  std::string describe_kernel(const RunOptions& opts = {}) const;

  struct Impl;

 private:
  explicit Scenario(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

}  // namespace migepi
