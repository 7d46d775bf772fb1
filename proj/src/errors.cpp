#include "tganet/errors.hpp"

namespace tganet {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyMask: return "EmptyMask";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::EmptyList: return "EmptyList";
    case ErrorKind::MissingWord: return "MissingWord";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidProbabilities: return "InvalidProbabilities";
    case ErrorKind::InvalidThresholds: return "InvalidThresholds";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteFeature: return "NonFiniteFeature";
    case ErrorKind::MissingDirectory: return "MissingDirectory";
    case ErrorKind::UnpairedSample: return "UnpairedSample";
    case ErrorKind::CorruptImage: return "CorruptImage";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::CheckpointVersionMismatch: return "CheckpointVersionMismatch";
    case ErrorKind::UnknownCommand: return "UnknownCommand";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace tganet
