#include "scmrelax/error.hpp"

namespace scmr {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kMissingUnit: return "MissingUnit";
    case ErrorCode::kMissingTime: return "MissingTime";
    case ErrorCode::kNonNumericCell: return "NonNumericCell";
    case ErrorCode::kTooFewPeriods: return "TooFewPeriods";
    case ErrorCode::kZeroBase: return "ZeroBase";
    case ErrorCode::kDegenerateSeries: return "DegenerateSeries";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kInsufficientHistory: return "InsufficientHistory";
    case ErrorCode::kDomainViolation: return "DomainViolation";
    case ErrorCode::kInfeasibleRelaxation: return "InfeasibleRelaxation";
    case ErrorCode::kNumericalFailure: return "NumericalFailure";
    case ErrorCode::kSingularMoment: return "SingularMoment";
    case ErrorCode::kRankDeficientDesign: return "RankDeficientDesign";
    case ErrorCode::kSingularCore: return "SingularCore";
    case ErrorCode::kBoundaryOracle: return "BoundaryOracle";
    case ErrorCode::kRankDeficient: return "RankDeficient";
    case ErrorCode::kInfeasibleOracle: return "InfeasibleOracle";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

nlohmann::json Error::to_json() const {
  return {{"error", std::string(to_string(code_))}, {"message", what()}, {"context", context_}};
}

}  // namespace scmr
