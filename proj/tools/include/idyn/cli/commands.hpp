#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "idyn/cli/config.hpp"

namespace idyn::cli {

enum ExitCode : int { kSuccess = 0, kVerdictFail = 1, kConfigError = 2, kNumericalFailure = 3 };

struct CommandOutput {
    int exit_code = kSuccess;
    std::string text;  ///< CSV or JSON payload
    std::vector<std::string> messages;
};

enum class SimulateMode { Internal, Full, Compare };

CommandOutput cmd_decouple(const RunConfig& config);
CommandOutput cmd_simulate(const RunConfig& config, SimulateMode mode);
CommandOutput cmd_check_stability(const RunConfig& config);

/// "t,q_0,..." rows with 17 significant digits.
std::string format_csv(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows);

/// gnuplot script plotting every column of `csv_path` against the first.
std::string plot_script(const std::string& csv_path, const std::vector<std::string>& header);

/// Full command-line entry point; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace idyn::cli
