#include "mvfuse/error.hpp"

namespace mvfuse {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::InsufficientPoints: return "InsufficientPoints";
    case ErrorCode::DegenerateOutput: return "DegenerateOutput";
    case ErrorCode::PlacementFailure: return "PlacementFailure";
    case ErrorCode::EmptyScan: return "EmptyScan";
    case ErrorCode::NoOverlap: return "NoOverlap";
    case ErrorCode::MissingNormals: return "MissingNormals";
    case ErrorCode::DisconnectedSet: return "DisconnectedSet";
    case ErrorCode::GraphConstructionFailure: return "GraphConstructionFailure";
    case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::CollinearNeighborhood: return "CollinearNeighborhood";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace mvfuse
