#include "stratamatch/error.hpp"

namespace stratamatch {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::RaggedRow: return "RaggedRow";
    case ErrorCode::TypeMismatch: return "TypeMismatch";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::DuplicateTerm: return "DuplicateTerm";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::NonBinaryTreatment: return "NonBinaryTreatment";
    case ErrorCode::ContinuousGroupingCovariate: return "ContinuousGroupingCovariate";
    case ErrorCode::BadFraction: return "BadFraction";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::SeparationDetected: return "SeparationDetected";
    case ErrorCode::SingleClassOutcome: return "SingleClassOutcome";
    case ErrorCode::UnseenLevel: return "UnseenLevel";
    case ErrorCode::TooManyStrata: return "TooManyStrata";
    case ErrorCode::ScoreLengthMismatch: return "ScoreLengthMismatch";
    case ErrorCode::ContinuousStratifyingCovariate: return "ContinuousStratifyingCovariate";
    case ErrorCode::NoStratumColumn: return "NoStratumColumn";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::UnknownStratum: return "UnknownStratum";
    case ErrorCode::NoPrognosticScores: return "NoPrognosticScores";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(to_string(code)) + ": " + detail),
      code_(code),
      detail_(detail) {}

std::string_view to_string(WarningCode code) {
  switch (code) {
    case WarningCode::NotConverged: return "NotConverged";
    case WarningCode::DegradedRatio: return "DegradedRatio";
    case WarningCode::InsufficientControls: return "InsufficientControls";
    case WarningCode::SizeTooLarge: return "SizeTooLarge";
    case WarningCode::DegenerateScores: return "DegenerateScores";
  }
  return "Unknown";
}

std::string Warning::render() const {
  return std::string(to_string(code)) + ": " + message;
}

}  // namespace stratamatch
