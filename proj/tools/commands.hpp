#pragma once

#include <filesystem>
#include <ostream>

#include "config.hpp"

namespace safestab::cli {

struct CommonFlags
{
  Overrides overrides;
  bool quiet = false;
};

/// Exit codes shared by all verbs.
enum ExitCode : int
{
  kOk = 0,
  kUsage = 1,
  kSimulationError = 2,
  kRefused = 3,
};

int cmd_run(const std::filesystem::path & config, const CommonFlags & flags, std::ostream & out, std::ostream & err);
int cmd_analyze(const std::filesystem::path & config, const CommonFlags & flags, std::ostream & out,
                std::ostream & err);
int cmd_plot(const std::filesystem::path & run_dir, const CommonFlags & flags, std::ostream & out, std::ostream & err);

/// Full command line: `safestab <run|analyze|plot> <path> [flags]`.
int main_entry(int argc, const char * const * argv, std::ostream & out, std::ostream & err);

}  // namespace safestab::cli
