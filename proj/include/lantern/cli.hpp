#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace lantern {

/// Runs one command line (argv[0] included). Returns 0 on success, 1 on a
/// usage error and 2 on a runtime error.
int dispatch(const std::vector<std::string>& argv);
int dispatch(int argc, const char* const* argv);

/// Manifest written next to every output: command, argv, resolved config,
/// seed, inputs, outputs, code version and wall clock.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string code_version;
  double wallclock_s = 0.0;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace lantern
