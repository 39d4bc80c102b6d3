#include "uda/error.hpp"

namespace uda {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::io: return "io";
    case ErrorKind::format: return "format";
    case ErrorKind::config: return "config";
    case ErrorKind::integrity: return "integrity";
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::state: return "state";
  }
  return "unknown";
}

}  // namespace uda
