#include "ppimtt/error.hpp"

namespace ppimtt {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::MissingHeader: return "MissingHeader";
    case ErrorKind::EmptySequence: return "EmptySequence";
    case ErrorKind::InvalidResidue: return "InvalidResidue";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::TargetOutOfRange: return "TargetOutOfRange";
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::MissingTensor: return "MissingTensor";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::UnknownProtein: return "UnknownProtein";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::InsufficientUniverse: return "InsufficientUniverse";
    case ErrorKind::TooFewExamples: return "TooFewExamples";
    case ErrorKind::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorKind::DegenerateLabels: return "DegenerateLabels";
    case ErrorKind::DegenerateSample: return "DegenerateSample";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Config: return "Config";
    case ErrorKind::Usage: return "Usage";
    case ErrorKind::Internal: return "Internal";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace ppimtt
