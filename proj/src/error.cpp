#include "gra/error.hpp"

namespace gra {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "configuration error";
    case ErrorKind::MissingArtifact: return "missing artifact";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Schema: return "schema error";
    case ErrorKind::Evaluation: return "evaluation error";
    case ErrorKind::MissingAllValues: return "missing-all-values error";
    case ErrorKind::DegenerateColumn: return "degenerate-column error";
    case ErrorKind::State: return "state error";
    case ErrorKind::Input: return "input error";
    case ErrorKind::Io: return "i/o error";
  }
  return "error";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Io:
      return 2;
    case ErrorKind::MissingArtifact:
      return 3;
    case ErrorKind::Format:
    case ErrorKind::Schema:
    case ErrorKind::Shape:
    case ErrorKind::Input:
      return 4;
    case ErrorKind::Numeric:
    case ErrorKind::MissingAllValues:
    case ErrorKind::DegenerateColumn:
    case ErrorKind::Evaluation:
    case ErrorKind::State:
      return 5;
  }
  return 1;
}

void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace gra
