#pragma once

#include <stdexcept>
#include <string>

namespace mcfuse {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad or missing input data: unreadable files, corrupt images, malformed
/// manifests, caches or model files.
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class DecodeError : public DataError {
 public:
  using DataError::DataError;
};

class RecompressionError : public DataError {
 public:
  using DataError::DataError;
};

/// A model file that does not satisfy the backbone contract.
class LoadError : public DataError {
 public:
  using DataError::DataError;
};

/// Caller violated a documented precondition (shapes, ids, branch order).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Numeric failure: non-finite values, empty training sets, singular systems.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace mcfuse
