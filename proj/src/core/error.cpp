#include "comptag/error.hpp"

namespace comptag {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Ok: return "Ok";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::DuplicateResourceId: return "DuplicateResourceId";
    case ErrorCode::UnknownEndpoint: return "UnknownEndpoint";
    case ErrorCode::SelfLoop: return "SelfLoop";
    case ErrorCode::DuplicateEdge: return "DuplicateEdge";
    case ErrorCode::UnknownCompetency: return "UnknownCompetency";
    case ErrorCode::EmptyProfileSet: return "EmptyProfileSet";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MissingVector: return "MissingVector";
    case ErrorCode::FragmentMismatch: return "FragmentMismatch";
    case ErrorCode::EmptyCandidateList: return "EmptyCandidateList";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::UnitMismatch: return "UnitMismatch";
    case ErrorCode::UnknownFragment: return "UnknownFragment";
    case ErrorCode::TooFewGroups: return "TooFewGroups";
    case ErrorCode::MissingCache: return "MissingCache";
    case ErrorCode::MissingStageInput: return "MissingStageInput";
    case ErrorCode::Config: return "Config";
    case ErrorCode::HierarchyCycle: return "HierarchyCycle";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

}  // namespace comptag
