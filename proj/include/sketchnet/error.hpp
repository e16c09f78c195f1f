#pragma once

#include <stdexcept>
#include <string>

namespace sketchnet {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Input data (sketch records, folds, feature banks) is malformed.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Sketch record could not be parsed; carries the 1-based line number.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Non-finite values, divergence, or a matrix that failed to factorize.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class CheckpointErrorKind { BadMagic, BadVersion, Corrupt, SpecMismatch, Io };

inline const char* to_string(CheckpointErrorKind k) {
  switch (k) {
    case CheckpointErrorKind::BadMagic: return "bad magic";
    case CheckpointErrorKind::BadVersion: return "unsupported version";
    case CheckpointErrorKind::Corrupt: return "corrupt checkpoint";
    case CheckpointErrorKind::SpecMismatch: return "network spec mismatch";
    case CheckpointErrorKind::Io: return "i/o failure";
  }
  return "unknown";
}

class CheckpointError : public Error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& detail)
      : Error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

  CheckpointErrorKind kind() const noexcept { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

}  // namespace sketchnet
