#pragma once

#include <stdexcept>
#include <string>

namespace sldc {

enum class ErrorKind {
  Config,      // bad parameters or configuration
  Io,          // file could not be opened/written
  Format,      // wrong magic/version or malformed text
  Corruption,  // truncated payload, non-finite values, bad labels
  Shape,       // dimension mismatch
  EmptyInput,  // operation needs at least one sample
  Conflict,    // duplicate class id
  Coverage,    // class missing from a bank or subset
  Numerical,   // factorization failure, divergence
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  // CLI exit code: 2 config, 3 data/format, 4 numerical.
  int exit_code() const;

 private:
  ErrorKind kind_;
};

}  // namespace sldc
