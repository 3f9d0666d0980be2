#include "ancestral/error.hpp"

namespace ancestral {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DoubleStochasticityViolation: return "DoubleStochasticityViolation";
    case ErrorCode::MassLeak: return "MassLeak";
    case ErrorCode::StabilityViolation: return "StabilityViolation";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::NonPositiveLambda: return "NonPositiveLambda";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::ComplexDominant: return "ComplexDominant";
    case ErrorCode::MissingCertificate: return "MissingCertificate";
    case ErrorCode::EmptyInitial: return "EmptyInitial";
    case ErrorCode::Explosion: return "Explosion";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::NotAlive: return "NotAlive";
    case ErrorCode::Extinct: return "Extinct";
    case ErrorCode::AcceptanceTooLow: return "AcceptanceTooLow";
    case ErrorCode::FloorExit: return "FloorExit";
    case ErrorCode::TooFewSurvivors: return "TooFewSurvivors";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace ancestral
