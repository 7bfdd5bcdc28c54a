#include "sldc/error.hpp"

namespace sldc {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "config error";
    case ErrorKind::Io: return "i/o error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Corruption: return "corruption error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::EmptyInput: return "empty input";
    case ErrorKind::Conflict: return "conflict error";
    case ErrorKind::Coverage: return "coverage error";
    case ErrorKind::Numerical: return "numerical error";
  }
  return "error";
}

int Error::exit_code() const {
  switch (kind_) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Numerical: return 4;
    default: return 3;
  }
}

}  // namespace sldc
