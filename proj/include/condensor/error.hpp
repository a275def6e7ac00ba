#pragma once

#include <stdexcept>
#include <string>

namespace condensor {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform for the named op.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class DTypeError : public Error {
 public:
  using Error::Error;
};

// Misuse of the tape: non-scalar loss, handles from another tape, ...
class GraphError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  enum class Code { io, bad_magic, bad_version, truncated, payload_mismatch, label_range, bad_header, metadata };
  FormatError(Code code, const std::string& what) : Error(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, int line = 0, std::string key = {})
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line), key_(std::move(key)) {}
  int line() const noexcept { return line_; }
  const std::string& key() const noexcept { return key_; }

 private:
  int line_;
  std::string key_;
};

// Dataset content violates an operation's precondition (too few samples, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace condensor
