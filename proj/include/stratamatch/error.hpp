#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stratamatch {

// Every domain failure the library can raise. The name of the enumerator is
// the stable token printed by the CLI ("UnseenLevel: C1=d").
enum class ErrorCode {
  RaggedRow,
  TypeMismatch,
  EmptyFile,
  SyntaxError,
  DuplicateTerm,
  UnknownColumn,
  NonBinaryTreatment,
  ContinuousGroupingCovariate,
  BadFraction,
  RankDeficient,
  TooFewRows,
  SeparationDetected,
  SingleClassOutcome,
  UnseenLevel,
  TooManyStrata,
  ScoreLengthMismatch,
  ContinuousStratifyingCovariate,
  NoStratumColumn,
  Infeasible,
  UnknownStratum,
  NoPrognosticScores,
  IoError,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }
  [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

// Non-fatal conditions surfaced alongside a result.
enum class WarningCode {
  NotConverged,
  DegradedRatio,
  InsufficientControls,
  SizeTooLarge,
  DegenerateScores,
};

std::string_view to_string(WarningCode code);

struct Warning {
  WarningCode code;
  std::string message;
  int stratum = 0;  // 0 when the warning is not tied to a stratum

  [[nodiscard]] std::string render() const;
};

}  // namespace stratamatch
