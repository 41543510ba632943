#pragma once

#include <stdexcept>
#include <string>

namespace gra {

// Failure categories. Each maps onto one process exit code in the CLI.
enum class ErrorKind {
  Config,           // invalid parameters or config files
  MissingArtifact,  // an input from an earlier stage is absent
  Format,           // malformed file, checkpoint or payload
  Numeric,          // non-finite values, divergence
  Shape,            // tensor or schema dimension mismatch
  Schema,           // column set violations
  Evaluation,       // metric preconditions (single class, too few rows)
  MissingAllValues, // imputation of a column with no observed cells
  DegenerateColumn, // zero-variance column in standardization
  State,            // API misuse, e.g. backward without a forward cache
  Input,            // bad values passed to a pure function
  Io,               // unwritable paths
};

const char* to_string(ErrorKind kind);

// Exit code used by the command-line front end for a given error kind.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace gra
