#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "adsense/bounds.hpp"
#include "adsense/harness.hpp"

namespace adsense::cli {

enum class Command { bounds, sweep_lambda, sweep_gain, tail_check, trial };

const char* command_name(Command command);

struct CliConfig {
  Command command = Command::bounds;
  std::optional<std::filesystem::path> config_path;
  std::filesystem::path out_dir = "out";

  std::vector<double> p_values{0.01};
  std::vector<double> q_values{2.0};
  double s = 16.0;
  std::size_t n_dim = 10000;
  std::size_t trials = 2000;
  std::uint64_t seed = 1;
  double r_db_min = -20.0;
  double r_db_max = 40.0;
  // 1 dB for bounds, 3 dB for the Monte Carlo sweeps unless set.
  double r_db_step = 0.0;
  // single-point commands (trial, tail-check)
  double r_db = 0.0;
  std::size_t mc_samples = 2000;
  unsigned workers = 1;
  CoefficientSource source = CoefficientSource::automatic;
  std::vector<Policy> policies;
  std::optional<double> lambda;
  double epsilon = 0.05;
  std::optional<std::string> isa;
  int verbosity = 0;

  double step_db() const;
  std::vector<double> r_grid() const;
  /// ModelConfig at the given (p, q) and r.
  ModelConfig model(double p, double q, double r) const;
};

/// Thrown by parse_and_validate; `code` is the process exit status.
struct ExitRequest {
  int code;
  std::string message;
};

/// Parses argv (argv[0] is the program name), merges the JSON config file
/// under the explicit flags and validates everything. Throws ExitRequest with
/// code 0 for --help and 2 for usage or validation failures.
CliConfig parse_and_validate(const std::vector<std::string>& argv);

/// Runs a validated command. Artifacts go to config.out_dir; tables meant for
/// a terminal go to `out`.
void dispatch(const CliConfig& config, std::ostream& out, std::ostream& log);

/// parse_and_validate + dispatch with the exit-code contract: 0 ok, 1 runtime
/// failure (error JSON on `err`), 2 usage.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

/// bounds CSV layout.
std::string bounds_csv_header();
std::string bounds_csv_row(const BoundReport& report, double r_db);

}  // namespace adsense::cli
