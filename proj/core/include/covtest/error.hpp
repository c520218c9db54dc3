#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace covtest {

enum class ErrorCode {
  ParameterOutOfRange,
  DimensionMismatch,
  NotPositiveSemiDefinite,
  NeedAtLeastTwoSamples,
  RequiresPLessThanN,
  SingularSampleCovariance,
  DegenerateRatio,
  EmptyGrid,
  TooFewSamples,
  ConditionViolated,
  NoFeasibleB,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries a machine-readable code; the
// message names the offending field or bound.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace covtest
