#pragma once

#include <string>
#include <vector>

namespace dmdlab::tools {

struct CheckResult {
  std::string suite;
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// scores, gradients, ratio, quadrature.
std::vector<std::string> verify_suite_names();

/// Runs one suite. Throws ConfigError("suite", ...) for an unknown name.
std::vector<CheckResult> run_verify_suite(const std::string& suite);

}  // namespace dmdlab::tools
