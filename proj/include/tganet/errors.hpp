#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tganet {

enum class ErrorKind {
  EmptyMask,
  EmptyDataset,
  EmptyList,
  MissingWord,
  DimensionMismatch,
  InvalidProbabilities,
  InvalidThresholds,
  InvalidConfig,
  ShapeMismatch,
  NonFiniteFeature,
  MissingDirectory,
  UnpairedSample,
  CorruptImage,
  DivergedLoss,
  CheckpointVersionMismatch,
  UnknownCommand,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for every module; `kind()` identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace tganet
