#pragma once

#include <stdexcept>
#include <string>

namespace dualspoof {

enum class ErrorKind {
  Parameter,
  Io,
  Format,
  Parse,
  DegenerateInput,
  Numeric,
  Lookup,
  Config,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parameter: return "parameter";
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::DegenerateInput: return "degenerate_input";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::Lookup: return "lookup";
    case ErrorKind::Config: return "config";
  }
  return "unknown";
}

// All library failures derive from Error; what() is the bare message and
// kind() tells callers which contract was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // One-line, machine-parsable rendering used by the CLI.
  std::string line() const {
    std::string msg = what();
    for (auto& c : msg) {
      if (c == '\n' || c == '\r') c = ' ';
    }
    return std::string("error: ") + to_string(kind_) + ": " + msg;
  }

 private:
  ErrorKind kind_;
};

#define DUALSPOOF_DEFINE_ERROR(Name, Kind)                            \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& message) : Error(Kind, message) {} \
  };

DUALSPOOF_DEFINE_ERROR(ParameterError, ErrorKind::Parameter)
DUALSPOOF_DEFINE_ERROR(IoError, ErrorKind::Io)
DUALSPOOF_DEFINE_ERROR(FormatError, ErrorKind::Format)
DUALSPOOF_DEFINE_ERROR(ParseError, ErrorKind::Parse)
DUALSPOOF_DEFINE_ERROR(DegenerateInputError, ErrorKind::DegenerateInput)
DUALSPOOF_DEFINE_ERROR(NumericError, ErrorKind::Numeric)
DUALSPOOF_DEFINE_ERROR(LookupError, ErrorKind::Lookup)
DUALSPOOF_DEFINE_ERROR(ConfigError, ErrorKind::Config)

#undef DUALSPOOF_DEFINE_ERROR

}  // namespace dualspoof
