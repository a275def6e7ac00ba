#pragma once

// Line-oriented run config:
//
//   seed = 7
//   [dc]
//   ipc = 1          # comment
//
// Keys inside a section are addressed as "section.key". A subcommand reads the
// keys it understands through the typed getters; finish() then rejects anything
// left unread, so typos fail loudly with their line number. check_known() is the
// variant for a config shared by several commands.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>

namespace condensor {

class Config {
 public:
  struct Entry {
    std::string value;
    int line = 0;
  };

  static Config parse(std::string_view text, std::string source = "<config>");
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  void set(const std::string& key, std::string value);  // command-line overrides

  std::string get_string(const std::string& key, const std::string& fallback);
  std::int64_t get_int(const std::string& key, std::int64_t fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  double get_double(const std::string& key, double fallback);
  bool get_bool(const std::string& key, bool fallback);
  // Required key; throws ConfigError naming the key when absent.
  std::string require_string(const std::string& key);

  void finish() const;
  // Rejects keys outside `known`, for configs shared by several commands.
  void check_known(const std::set<std::string>& known) const;

  // Every key read so far with the value in effect, defaults included.
  const std::map<std::string, std::string>& resolved() const { return resolved_; }
  const std::string& source() const { return source_; }

 private:
  const Entry* lookup(const std::string& key);
  [[noreturn]] void bad_value(const std::string& key, const Entry& e, const char* expected) const;

  std::string source_;
  std::map<std::string, Entry> entries_;
  std::map<std::string, bool> used_;
  std::map<std::string, std::string> resolved_;
};

}  // namespace condensor
