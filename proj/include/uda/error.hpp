#pragma once

#include <stdexcept>
#include <string>

namespace uda {

enum class ErrorKind { usage = 2, io = 3, format = 4, config = 5, integrity = 6, invalid_argument = 7, state = 8 };

// Categorized failure; the CLI maps the kind to its exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

const char* to_string(ErrorKind kind);

}  // namespace uda
