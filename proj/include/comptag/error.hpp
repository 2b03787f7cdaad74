#pragma once

#include <stdexcept>
#include <string>

namespace comptag {

// Numeric values are mirrored one-to-one by ct_status in comptag.h.
enum class ErrorCode : int {
  Ok = 0,
  InvalidArgument = 1,
  Io = 2,
  MalformedRecord = 3,
  DuplicateResourceId = 4,
  UnknownEndpoint = 5,
  SelfLoop = 6,
  DuplicateEdge = 7,
  UnknownCompetency = 8,
  EmptyProfileSet = 9,
  DimensionMismatch = 10,
  MissingVector = 11,
  FragmentMismatch = 12,
  EmptyCandidateList = 13,
  ProviderUnavailable = 14,
  UnitMismatch = 15,
  UnknownFragment = 16,
  TooFewGroups = 17,
  MissingCache = 18,
  MissingStageInput = 19,
  Config = 20,
  HierarchyCycle = 21,
  Internal = 22,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace comptag
