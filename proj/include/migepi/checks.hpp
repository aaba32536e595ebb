#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace migepi {

struct CheckInfo {
  std::string name;
  std::string description;
  double tolerance = 0.0;  // default, multiplied by the run's tolerance scale
  std::string anchor;
};

/// Every named check a scenario may request.
const std::vector<CheckInfo>& check_catalog();

/// nullptr when the name is unknown.
const CheckInfo* find_check(std::string_view name);

struct CheckOutcome {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

}  // namespace migepi
