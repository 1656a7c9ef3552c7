#include "mreg/error.hpp"

namespace mreg {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::FrameMismatch: return "FrameMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::AllZeroCurvature: return "AllZeroCurvature";
    case ErrorCode::MissingNormals: return "MissingNormals";
    case ErrorCode::NoCorrespondences: return "NoCorrespondences";
    case ErrorCode::TooFewCorrespondences: return "TooFewCorrespondences";
    case ErrorCode::AllPruned: return "AllPruned";
    case ErrorCode::InsufficientInliers: return "InsufficientInliers";
    case ErrorCode::EmptyRoi: return "EmptyRoi";
    case ErrorCode::EmptyFusion: return "EmptyFusion";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::AllZeroDifferences: return "AllZeroDifferences";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Config: return "Config";
    case ErrorCode::Parse: return "Parse";
  }
  return "Unknown";
}

ErrorKind kind_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io:
    case ErrorCode::Parse:
      return ErrorKind::Io;
    case ErrorCode::Config:
    case ErrorCode::InvalidParams:
      return ErrorKind::Config;
    default:
      return ErrorKind::Algorithm;
  }
}

Error::Error(ErrorCode code, const std::string& message, std::string stage)
    : std::runtime_error(message), code_(code), stage_(std::move(stage)) {}

Error Error::with_stage(std::string stage) const {
  return Error(code_, what(), std::move(stage));
}

}  // namespace mreg
