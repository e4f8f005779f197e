#pragma once

#include <stdexcept>
#include <string>

namespace casecohort {

enum class ErrorCode {
  // data / request validation
  MissingColumn,
  ParseError,
  InvariantViolation,
  UnknownStratumInOverride,
  ZeroSampled,
  NegativeOrZeroProvidedWeight,
  EmptyPhase3Stratum,
  MTooLarge,
  MRequiresAtLeastTwo,
  ConfigError,
  IoError,
  StaleArtifact,
  // numerical
  SingularInformation,
  NonConvergence,
  MonotoneLikelihood,
  SingularDesign,
  SeparableLogistic,
  CalibrationSingular,
  CalibrationNonConvergence,
  NegativeVarianceDiagonal,
};

const char* error_code_name(ErrorCode code);

// Validation failures exit the CLI with code 2, numerical failures with 3.
bool is_validation_error(ErrorCode code);

class CcError : public std::runtime_error {
 public:
  CcError(ErrorCode code, std::string stage, const std::string& message)
      : std::runtime_error(message), code_(code), stage_(std::move(stage)) {}

  ErrorCode code() const { return code_; }
  const std::string& stage() const { return stage_; }

 private:
  ErrorCode code_;
  std::string stage_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& stage,
                              const std::string& message) {
  throw CcError(code, stage, message);
}

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::UnknownStratumInOverride: return "UnknownStratumInOverride";
    case ErrorCode::ZeroSampled: return "ZeroSampled";
    case ErrorCode::NegativeOrZeroProvidedWeight: return "NegativeOrZeroProvidedWeight";
    case ErrorCode::EmptyPhase3Stratum: return "EmptyPhase3Stratum";
    case ErrorCode::MTooLarge: return "MTooLarge";
    case ErrorCode::MRequiresAtLeastTwo: return "MRequiresAtLeastTwo";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::StaleArtifact: return "StaleArtifact";
    case ErrorCode::SingularInformation: return "SingularInformation";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::MonotoneLikelihood: return "MonotoneLikelihood";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::SeparableLogistic: return "SeparableLogistic";
    case ErrorCode::CalibrationSingular: return "CalibrationSingular";
    case ErrorCode::CalibrationNonConvergence: return "CalibrationNonConvergence";
    case ErrorCode::NegativeVarianceDiagonal: return "NegativeVarianceDiagonal";
  }
  return "Unknown";
}

inline bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::SingularInformation:
    case ErrorCode::NonConvergence:
    case ErrorCode::MonotoneLikelihood:
    case ErrorCode::SingularDesign:
    case ErrorCode::SeparableLogistic:
    case ErrorCode::CalibrationSingular:
    case ErrorCode::CalibrationNonConvergence:
    case ErrorCode::NegativeVarianceDiagonal:
      return false;
    default:
      return true;
  }
}

}  // namespace casecohort
