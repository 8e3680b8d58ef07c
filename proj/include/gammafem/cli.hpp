#pragma once

#include <json.hpp>
#include <stdexcept>
#include <string>

namespace gfem {

/// Raised for malformed or unknown configuration; maps to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitCheckFailed = 4;

/// Runs one subcommand against a validated JSON config. Value outputs are a
/// pure function of (config, seed); wall-clock measurements go to separate
/// *_timing files. Returns an exit code; throws ConfigError for bad configs
/// and std::runtime_error for numerical failures.
int run_command(const std::string& command, nlohmann::json config);

/// Names accepted by run_command.
std::vector<std::string> command_names();

}  // namespace gfem
