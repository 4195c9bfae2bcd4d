#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mambahash {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or arity mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// A NaN or infinity appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid model, training, or CLI configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input records (labels, manifests).
class DataError : public Error {
 public:
  using Error::Error;
};

// Filesystem failures: missing files, unwritable paths.
class IoError : public Error {
 public:
  using Error::Error;
};

// Binary file that does not follow the expected layout.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace mambahash
