#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lgb/common.hpp"

namespace lgb {

/// Bad command line: unknown command, flag, or config key.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Written next to every command output.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config;  // every default materialized
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  std::string started_at;
  std::string finished_at;

  /// Independent of key order in `config`.
  std::string config_hash() const;
  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  void write(const std::filesystem::path& path) const;
};

/// Hash of the canonical (key-sorted, compact) serialization.
std::string canonical_hash(const nlohmann::json& j);

/// Resolved configuration for the command line tools: the pipeline settings
/// plus the generator, analytics, and service sections, all defaults filled in.
nlohmann::json default_cli_config();

/// Applies "[section] key = value" lines. Unknown keys raise UsageError.
void apply_config_text(nlohmann::json& config, const std::string& ini_text);
/// Sets one dotted key from its textual value.
void apply_override(nlohmann::json& config, const std::string& dotted_key, const std::string& value);

/// Exit codes: 0 success, 1 failed validation or runtime error, 2 usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lgb
