#pragma once

#include "enopt/harness.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace enopt {

/// Bad configuration file. The message names the field (and the line for
/// syntax errors).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

[[nodiscard]] nlohmann::json config_to_json(const BenchConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
[[nodiscard]] BenchConfig config_from_json(const nlohmann::json& j);
[[nodiscard]] BenchConfig parse_config(const std::string& text);
[[nodiscard]] BenchConfig load_config(const std::filesystem::path& path);

/// FNV-1a over the canonical JSON dump, as 16 hex digits. workers is left
/// out since it does not change results.
[[nodiscard]] std::string config_digest(const BenchConfig& cfg);

}  // namespace enopt
