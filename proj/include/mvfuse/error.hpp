#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mvfuse {

enum class ErrorCode {
  EmptyInput,
  InvalidParameter,
  InsufficientPoints,
  DegenerateOutput,
  PlacementFailure,
  EmptyScan,
  NoOverlap,
  MissingNormals,
  DisconnectedSet,
  GraphConstructionFailure,
  ConvergenceFailure,
  SizeMismatch,
  TooLarge,
  CollinearNeighborhood,
  InsufficientData,
  ConfigError,
  IoError,
  ParseError,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; the code tells callers what failed.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mvfuse
