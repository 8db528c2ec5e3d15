#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace scmr {

enum class ErrorCode {
  kInvalidArgument,
  kIo,
  // panel
  kMissingUnit,
  kMissingTime,
  kNonNumericCell,
  kTooFewPeriods,
  kZeroBase,
  kDegenerateSeries,
  kDimensionMismatch,
  kInsufficientHistory,
  // solver
  kDomainViolation,
  kInfeasibleRelaxation,
  kNumericalFailure,
  // baselines
  kSingularMoment,
  kRankDeficientDesign,
  // oracle
  kSingularCore,
  kBoundaryOracle,
  kRankDeficient,
  kInfeasibleOracle,
  // simulation
  kInvalidConfig,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-readable code plus structured context
/// (offending row/column, unit label, residuals, ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, nlohmann::json context = nlohmann::json::object())
      : std::runtime_error(message), code_(code), context_(std::move(context)) {}

  ErrorCode code() const noexcept { return code_; }
  const nlohmann::json& context() const noexcept { return context_; }

  /// {"error": "<code>", "message": "...", "context": {...}}
  nlohmann::json to_json() const;

 private:
  ErrorCode code_;
  nlohmann::json context_;
};

}  // namespace scmr
