#pragma once

#include <iosfwd>
#include <string>

#include "fedsim/report_io.hpp"

namespace fedsim {

/// Exit codes of the command-line front end.
enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitConfig = 2 };

/// Entry point of the `fedsim` tool: `run`, `compare` and `cluster-report`.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// "84.1 ± 14.53": mean and std of fractional accuracies as percentages.
std::string format_accuracy(double mean, double std);

}  // namespace fedsim
