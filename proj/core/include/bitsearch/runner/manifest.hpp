#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace bitsearch::runner {

inline constexpr const char* kToolVersion = "0.1.0";

/// Lower-case hex SHA-256.
std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::filesystem::path& path);

struct ManifestEntry {
  std::string file;  // relative to the run directory
  std::string sha256;
  std::uint64_t bytes = 0;
};

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string tool_version = kToolVersion;
  std::string started_at;   // UTC, ISO 8601
  std::string finished_at;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> outputs;
  /// Extra scalar results recorded by the command (name, JSON literal).
  std::vector<std::pair<std::string, std::string>> results;

  void add_output(const std::filesystem::path& run_dir, const std::string& file);
};

std::string utc_now();

/// Writes `manifest-<command>.json` into the run directory.
void write_manifest(const std::filesystem::path& run_dir, const RunManifest& manifest);

}  // namespace bitsearch::runner
