#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace granlab {

// Base for every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A materialization guard was exceeded.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// A caller violated an operation precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed binary input; carries the byte offset where parsing stopped.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

// Checkpoint or sample container does not match the expected format.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Training diverged (non-finite loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Bad command line or configuration.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace granlab
