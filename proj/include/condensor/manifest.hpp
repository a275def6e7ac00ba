#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace condensor {

inline constexpr const char* kEngineVersion = "0.1.0";

// Hex SHA-1 over "blob <size>\0" + bytes, as `git hash-object` computes it.
std::string git_blob_sha1(std::span<const std::uint8_t> bytes);
std::string hash_file(const std::filesystem::path& path);

struct RunManifest {
  std::string subcommand;
  std::map<std::string, std::string> config;  // every key with the value in effect
  std::map<std::string, std::string> inputs;   // path -> blob hash
  std::map<std::string, std::string> outputs;  // path -> blob hash
  std::map<std::string, std::string> conventions;  // fixed choices and derived values worth recording
  std::uint64_t seed = 0;
  double runtime_s = 0;

  void add_input(const std::filesystem::path& p) { inputs[p.string()] = hash_file(p); }
  void add_output(const std::filesystem::path& p) { outputs[p.string()] = hash_file(p); }

  std::string to_json() const;
  void write(const std::filesystem::path& path) const;
};

}  // namespace condensor
