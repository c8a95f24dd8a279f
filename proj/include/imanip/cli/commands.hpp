#pragma once

#include <exception>
#include <string>
#include <vector>

#include "imanip/cli/config.hpp"

namespace imanip::cli {

// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,      // unexpected error
  kExitUsage = 2,        // bad flags, config keys or values, schedule syntax
  kExitIo = 3,           // missing or corrupt input files
  kExitGate = 4,         // base training failed its learnability gate
  kExitInvariant = 5,    // a run finished but a checked invariant did not hold
};
int exit_code_for(const std::exception& e);

// Output directory: IMANIP_OUT overrides the configured value.
std::string resolve_out(const RunConfig& cfg);

struct SampleDemoArgs {
  std::string skill = "all";
  int count = 20;
  std::uint64_t seed = 0;
};
int cmd_sample_demo(const RunConfig& cfg, const SampleDemoArgs& args);

int cmd_run(const RunConfig& cfg);

struct AblateArgs {
  std::string param;
  std::vector<std::string> values;
};
int cmd_ablate(const RunConfig& cfg, const AblateArgs& args);

int cmd_report(const RunConfig& cfg, const std::vector<std::string>& inputs);

}  // namespace imanip::cli
