#pragma once

// Batch front-end: run / study / probe-qye / list-models.

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace splitflow {

const char* version();

/// Exit statuses of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitAuditFailed = 1,
  kExitIo = 2,
  kExitNumerical = 3,
  kExitConfig = 4,
};

struct RunConfig {
  std::string command = "run";
  std::string model = "counterexample";
  nlohmann::json overrides = nlohmann::json::object();
  /// Empty: the preset's scheme.
  std::string scheme;
  /// Empty: the preset's N.
  std::optional<int> N;
  /// Explicit partition nodes (take precedence over N).
  std::vector<double> nodes;
  int inner_steps = 8;
  double tol = 1e-10;
  /// Empty: $SPLITFLOW_OUT (or ./splitflow-out) / <model>-<scheme>.
  std::string out;
  int jobs = 1;
  std::uint64_t seed = 7;
  std::vector<int> study;
  bool edb = true;
  bool remainder = true;
  bool decomposition = true;
  int qye_samples = 1000;
  std::vector<int> witness = {4, 8, 16, 32, 64};

  nlohmann::json to_json() const;
  /// Unknown keys are configuration errors.
  static RunConfig from_json(const nlohmann::json& j);
};

/// Entry point of the tool; returns the exit status.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace splitflow
