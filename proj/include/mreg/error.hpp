#pragma once

#include <stdexcept>
#include <string>

namespace mreg {

enum class ErrorCode {
  InvalidParams,
  FrameMismatch,
  EmptyInput,
  TooFewPoints,
  AllZeroCurvature,
  MissingNormals,
  NoCorrespondences,
  TooFewCorrespondences,
  AllPruned,
  InsufficientInliers,
  EmptyRoi,
  EmptyFusion,
  LengthMismatch,
  EmptySample,
  AllZeroDifferences,
  ZeroVariance,
  Io,
  Config,
  Parse,
};

// Coarse grouping used for CLI exit codes.
enum class ErrorKind { Config, Io, Algorithm };

const char* to_string(ErrorCode code);
ErrorKind kind_of(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string stage = {});

  ErrorCode code() const noexcept { return code_; }
  // Pipeline stage that raised the error ("coarse", "fine", ...), empty if none.
  const std::string& stage() const noexcept { return stage_; }

  Error with_stage(std::string stage) const;

 private:
  ErrorCode code_;
  std::string stage_;
};

}  // namespace mreg
