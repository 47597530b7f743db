#pragma once

#include <stdexcept>
#include <string>

namespace bitsearch {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidBitwidthError : public Error {
 public:
  using Error::Error;
};

/// Tensor or layer shapes do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class TrainingDivergedError : public Error {
 public:
  TrainingDivergedError(int epoch, const std::string& what)
      : Error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class UpdateDivergedError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

class TruncatedFileError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

class CountMismatchError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Wrong magic or unsupported format version.
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CorruptCheckpointError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class SpaceTooLargeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace bitsearch
