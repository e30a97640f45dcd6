#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gs2pc {

/// Malformed or unsupported input file content.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File-system level failure (missing file, short read, unwritable path).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition on in-memory data (empty scene, zero volumes, ...).
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad command-line or configuration input. Maps to exit status 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A covariance that could not be made positive definite.
class DegenerateGaussianError : public std::runtime_error {
 public:
  explicit DegenerateGaussianError(std::size_t index)
      : std::runtime_error("degenerate Gaussian at index " + std::to_string(index)),
        index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

}  // namespace gs2pc
