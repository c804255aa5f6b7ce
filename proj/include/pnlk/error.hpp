#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pnlk {

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised where a computation is numerically singular (e.g. log near a
/// half-turn rotation, collinear ICP correspondences).
class IllConditioned : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class RankDeficient : public IllConditioned {
 public:
  using IllConditioned::IllConditioned;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Weight blob failures. Each kind is its own type so callers can tell a
// corrupted file from an incompatible one.
class BlobError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ChecksumError : public BlobError {
 public:
  using BlobError::BlobError;
};
class DimensionError : public BlobError {
 public:
  using BlobError::BlobError;
};
class VersionError : public BlobError {
 public:
  using BlobError::BlobError;
};
class FormatError : public BlobError {
 public:
  using BlobError::BlobError;
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A registration loop aborted part way; carries the iteration index.
class RegistrationFailure : public std::runtime_error {
 public:
  RegistrationFailure(const std::string& what, int iteration)
      : std::runtime_error(what + " at iteration " + std::to_string(iteration)),
        iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

}  // namespace pnlk
