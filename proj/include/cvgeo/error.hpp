#pragma once

#include <stdexcept>
#include <string>

namespace cvgeo {

// Every error carries a stable class name so the CLI can print a one-line
// machine-parseable diagnostic and pick an exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what) : Error("ArgumentError", what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("ShapeError", what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error("NumericError", what) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error("DivergenceError", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("IoError", what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error("FormatError", what) {}
};

class VersionError : public Error {
 public:
  explicit VersionError(const std::string& what) : Error("VersionError", what) {}
};

class TruncationError : public Error {
 public:
  explicit TruncationError(const std::string& what) : Error("TruncationError", what) {}
};

}  // namespace cvgeo
