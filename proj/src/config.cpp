#include "condensor/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "condensor/error.hpp"

namespace condensor {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  return true;
}

std::string shortest(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

Config Config::parse(std::string_view text, std::string source) {
  Config cfg;
  cfg.source_ = std::move(source);
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    auto line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(cfg.source_ + ": malformed section header", line_no);
      auto name = trim(line.substr(1, line.size() - 2));
      if (!valid_name(name)) throw ConfigError(cfg.source_ + ": bad section name '" + std::string(name) + "'", line_no);
      section = std::string(name);
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(cfg.source_ + ": expected 'key = value'", line_no);
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (!valid_name(key)) throw ConfigError(cfg.source_ + ": bad key '" + std::string(key) + "'", line_no);
    std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
    if (cfg.entries_.count(full))
      throw ConfigError(cfg.source_ + ": duplicate key '" + full + "' (first set on line " +
                            std::to_string(cfg.entries_[full].line) + ")",
                        line_no, full);
    cfg.entries_[full] = {std::string(value), line_no};
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void Config::set(const std::string& key, std::string value) { entries_[key] = {std::move(value), 0}; }

const Config::Entry* Config::lookup(const std::string& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  used_[key] = true;
  return &it->second;
}

void Config::bad_value(const std::string& key, const Entry& e, const char* expected) const {
  throw ConfigError(source_ + ": key '" + key + "': expected " + expected + ", got '" + e.value + "'", e.line, key);
}

std::string Config::get_string(const std::string& key, const std::string& fallback) {
  const auto* e = lookup(key);
  return resolved_[key] = e ? e->value : fallback;
}

std::string Config::require_string(const std::string& key) {
  const auto* e = lookup(key);
  if (!e || e->value.empty()) throw ConfigError(source_ + ": missing required key '" + key + "'", 0, key);
  return resolved_[key] = e->value;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) {
  std::int64_t v = fallback;
  if (const auto* e = lookup(key)) {
    auto r = std::from_chars(e->value.data(), e->value.data() + e->value.size(), v);
    if (r.ec != std::errc() || r.ptr != e->value.data() + e->value.size()) bad_value(key, *e, "an integer");
  }
  resolved_[key] = std::to_string(v);
  return v;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) {
  std::uint64_t v = fallback;
  if (const auto* e = lookup(key)) {
    auto r = std::from_chars(e->value.data(), e->value.data() + e->value.size(), v);
    if (r.ec != std::errc() || r.ptr != e->value.data() + e->value.size()) bad_value(key, *e, "an unsigned integer");
  }
  resolved_[key] = std::to_string(v);
  return v;
}

double Config::get_double(const std::string& key, double fallback) {
  double v = fallback;
  if (const auto* e = lookup(key)) {
    auto r = std::from_chars(e->value.data(), e->value.data() + e->value.size(), v);
    if (r.ec != std::errc() || r.ptr != e->value.data() + e->value.size()) bad_value(key, *e, "a number");
  }
  resolved_[key] = shortest(v);
  return v;
}

bool Config::get_bool(const std::string& key, bool fallback) {
  bool v = fallback;
  if (const auto* e = lookup(key)) {
    if (e->value == "true" || e->value == "1" || e->value == "yes")
      v = true;
    else if (e->value == "false" || e->value == "0" || e->value == "no")
      v = false;
    else
      bad_value(key, *e, "true or false");
  }
  resolved_[key] = v ? "true" : "false";
  return v;
}

void Config::finish() const {
  for (const auto& [key, e] : entries_)
    if (!used_.count(key)) throw ConfigError(source_ + ": unknown key '" + key + "'", e.line, key);
}

void Config::check_known(const std::set<std::string>& known) const {
  for (const auto& [key, e] : entries_)
    if (!known.count(key)) throw ConfigError(source_ + ": unknown key '" + key + "'", e.line, key);
}

}  // namespace condensor
