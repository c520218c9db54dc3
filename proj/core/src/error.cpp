#include "covtest/error.hpp"

namespace covtest {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ParameterOutOfRange: return "ParameterOutOfRange";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NotPositiveSemiDefinite: return "NotPositiveSemiDefinite";
    case ErrorCode::NeedAtLeastTwoSamples: return "NeedAtLeastTwoSamples";
    case ErrorCode::RequiresPLessThanN: return "RequiresPLessThanN";
    case ErrorCode::SingularSampleCovariance: return "SingularSampleCovariance";
    case ErrorCode::DegenerateRatio: return "DegenerateRatio";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::ConditionViolated: return "ConditionViolated";
    case ErrorCode::NoFeasibleB: return "NoFeasibleB";
  }
  return "Unknown";
}

}  // namespace covtest
