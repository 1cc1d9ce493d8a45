#pragma once

#include <stdexcept>
#include <string>

namespace moshead {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorKind {
  usage = 1,     // bad flags / invocation
  data = 2,      // malformed or inconsistent inputs
  numeric = 3,   // divergence, singularity, degeneracy
  internal = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

  static Error usage(const std::string& msg) { return {ErrorKind::usage, msg}; }
  static Error data(const std::string& msg) { return {ErrorKind::data, msg}; }
  static Error numeric(const std::string& msg) { return {ErrorKind::numeric, msg}; }
  static Error internal(const std::string& msg) { return {ErrorKind::internal, msg}; }

 private:
  ErrorKind kind_;
};

}  // namespace moshead
