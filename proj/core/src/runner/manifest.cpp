#include "bitsearch/runner/manifest.hpp"

#include "bitsearch/error.hpp"

#include <chrono>
#include <fmt/format.h>
#include <fstream>
#include <json.hpp>
#include <openssl/evp.h>
#include <sstream>

namespace bitsearch::runner {

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot read '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

void RunManifest::add_output(const std::filesystem::path& run_dir, const std::string& file) {
  const auto path = run_dir / file;
  outputs.push_back({file, file_sha256(path), static_cast<std::uint64_t>(std::filesystem::file_size(path))});
}

std::string utc_now() {
  const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                     tm.tm_min, tm.tm_sec);
}

void write_manifest(const std::filesystem::path& run_dir, const RunManifest& m) {
  using json = nlohmann::ordered_json;
  json j;
  j["command"] = m.command;
  j["tool_version"] = m.tool_version;
  j["config_sha256"] = m.config_hash;
  j["seed"] = m.seed;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  json outputs = json::array();
  for (const auto& o : m.outputs) outputs.push_back({{"file", o.file}, {"sha256", o.sha256}, {"bytes", o.bytes}});
  j["outputs"] = outputs;
  json results = json::object();
  for (const auto& [k, v] : m.results) results[k] = json::parse(v);
  j["results"] = results;
  const auto path = run_dir / fmt::format("manifest-{}.json", m.command);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << j.dump(2) << '\n';
}

}  // namespace bitsearch::runner
