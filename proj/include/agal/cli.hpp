#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace agal::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

struct RunManifest {
  std::string command;
  nlohmann::ordered_json config;
  std::uint64_t seed = 0;
  std::vector<std::string> input_paths;
  std::vector<std::string> output_files;  ///< relative to the manifest directory
  nlohmann::ordered_json summary;
  std::optional<std::string> wall_clock;
};

/// Writes manifest.json into `dir` with digests of the listed inputs and outputs.
void write_manifest(const std::filesystem::path& dir, const RunManifest& manifest);

/// Full command line dispatch. Returns the process exit status:
/// 0 success, 2 input or usage errors, 3 convergence failures, 4 infeasibility.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace agal::cli
