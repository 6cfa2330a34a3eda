#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

namespace panelamm::cli {

enum ExitCode : int { exit_ok = 0, exit_failure = 1, exit_config = 2, exit_data = 3, exit_not_converged = 4 };

struct RunOptions {
  std::string command;
  std::filesystem::path panel;
  std::filesystem::path schema;
  std::filesystem::path out_dir;
  std::filesystem::path spec;
  std::filesystem::path groups;
  std::filesystem::path boost_config;
  std::filesystem::path recipes;
  std::filesystem::path run_dir;
  std::uint64_t seed = 1;
  int jobs = 1;
  std::optional<std::string> effects;  // forces the effects mode and skips the Mundlak test
  int break_year = 2007;
  bool skip_boost = false;
  std::string lrt = "marginal";
  std::string backend = "plugin_hat";
  std::string criterion = "reml";
  bool timing = false;  // adds wall-clock seconds to the manifest
  bool force = false;   // allow writing into a non-empty output directory
};

int run_transform(const RunOptions& options);
int run_fit(const RunOptions& options);
int run_tournament(const RunOptions& options);
int run_boost(const RunOptions& options);
int run_break(const RunOptions& options);
int run_report(const RunOptions& options);

// Runs a command, printing any library error to stderr and mapping it onto
// the exit codes above.
int guarded(const std::function<int()>& command);

}  // namespace panelamm::cli
