#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ppimtt {

enum class ErrorKind {
  // ingestion / parse
  EmptyFile,
  MissingHeader,
  EmptySequence,
  InvalidResidue,
  MalformedRow,
  TargetOutOfRange,
  MalformedHeader,
  // named tensors and tables
  MissingTensor,
  ShapeMismatch,
  NonFiniteValue,
  DimMismatch,
  // referential
  UnknownProtein,
  DuplicateId,
  // protocol
  InsufficientUniverse,
  TooFewExamples,
  EmptyTrainingSet,
  // metrics
  DegenerateLabels,
  DegenerateSample,
  // plumbing
  InvalidArgument,
  Io,
  Config,
  Usage,
  Internal,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (the CLI in
/// particular) can map it onto an exit code without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace ppimtt
