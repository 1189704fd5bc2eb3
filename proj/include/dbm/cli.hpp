#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace dbm::cli {

/// Effective settings of one subcommand after merging defaults, the config
/// file and flags. File locations are kept out of `values` so that runs in
/// different directories hash equally.
struct RunConfig {
  std::string command;
  nlohmann::json values = nlohmann::json::object();
  std::uint64_t seed = 0;

  /// 16 hex digits of FNV-1a over the canonical dump of command and values.
  std::string hash() const;
  /// {"command", "config", "config_hash", "seed"}; embedded in every artifact.
  nlohmann::json stamp() const;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;

/// Environment variable naming a default config file.
inline constexpr const char* kConfigEnv = "DBM_CONFIG";

/// Runs one subcommand. `args` excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace dbm::cli
