#pragma once

#include "json.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace enopt {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct RunManifest {
  std::string command;
  std::string config_digest;
  nlohmann::json config;
  std::string code_version;
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> outputs;
  std::vector<std::string> notes;
};

[[nodiscard]] std::string code_version();
/// UTC, ISO 8601, second resolution.
[[nodiscard]] std::string utc_timestamp();
/// Writes dir/manifest.json, replacing any previous one.
void write_manifest(const std::filesystem::path& dir, const RunManifest& manifest);

/// Entry point of the enopt executable. args excludes the program name.
[[nodiscard]] int run_cli(const std::vector<std::string>& args, std::ostream& out,
                          std::ostream& err);

}  // namespace enopt
