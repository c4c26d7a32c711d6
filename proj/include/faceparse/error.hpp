#pragma once

#include <stdexcept>
#include <string>

namespace faceparse {

/// Root of every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed tensors, geometries or configs that violate a precondition.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Problems with files or datasets supplied by the user. The CLI maps these
/// (and every subclass) to exit status 2.
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

/// A listening socket could not be bound (typically: port already in use).
class AddressInUseError : public IoError {
 public:
  using IoError::IoError;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Bit depth or color type the loader does not accept.
class UnsupportedImageError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// A mask pixel outside the class range.
class MaskValueError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Paired image and mask (or two inputs that must agree) differ in size.
class DimensionMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class CompatibilityError : public DataError {
 public:
  using DataError::DataError;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace faceparse
