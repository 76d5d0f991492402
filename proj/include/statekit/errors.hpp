#pragma once

#include <stdexcept>
#include <string>

namespace statekit {

// Base class for all library errors. The CLI maps subtypes to exit codes:
// usage errors 2, data/format errors 3, numeric divergence 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or unsupported file content (bad magic, wrong header, unknown encoding).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Structurally valid file that ends early or fails a checksum.
class IntegrityError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Well-formed input whose values violate a contract (unknown label, duplicate
// path, empty split, degenerate training data).
class DataError : public Error {
 public:
  using Error::Error;
};

// Tensor/image shape mismatch.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Checkpoint whose layer structure does not match the target model.
class StructureError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Iterative solver exhausted its iteration budget with violations left.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// NaN or Inf appeared in a training loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace statekit
