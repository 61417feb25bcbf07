#include "nmnet/error.hpp"

namespace nmnet {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateFrame: return "DegenerateFrame";
    case ErrorCode::ProjectionAtInfinity: return "ProjectionAtInfinity";
    case ErrorCode::DegenerateEpipolar: return "DegenerateEpipolar";
    case ErrorCode::InsufficientCorrespondences: return "InsufficientCorrespondences";
    case ErrorCode::CapacityExceeded: return "CapacityExceeded";
    case ErrorCode::EmptyBucket: return "EmptyBucket";
    case ErrorCode::NoInliers: return "NoInliers";
    case ErrorCode::GenerationFailed: return "GenerationFailed";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::VersionError: return "VersionError";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::NoConsensus: return "NoConsensus";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace nmnet
