#include "errors.hpp"

namespace fastslow {

std::string_view category_name(ErrorCategory category) noexcept {
    switch (category) {
        case ErrorCategory::ConfigInvalid: return "config-invalid";
        case ErrorCategory::IntegrationDiverged: return "integration-diverged";
        case ErrorCategory::NearSingular: return "near-singular";
        case ErrorCategory::TooFewSamples: return "too-few-samples";
        case ErrorCategory::InsufficientLags: return "insufficient-lags";
        case ErrorCategory::StepSizeGuard: return "step-size-guard";
        case ErrorCategory::NotPsd: return "not-psd";
        case ErrorCategory::DimensionMismatch: return "dimension-mismatch";
        case ErrorCategory::OutOfHull: return "out-of-hull";
        case ErrorCategory::ModeCountTooLarge: return "mode-count-too-large";
        case ErrorCategory::Misaligned: return "misaligned";
        case ErrorCategory::TrajectoryTooShort: return "trajectory-too-short";
        case ErrorCategory::NonFinite: return "non-finite";
        case ErrorCategory::Io: return "io";
        case ErrorCategory::CheckFailed: return "check-failed";
        case ErrorCategory::InvalidArgument: return "invalid-argument";
        case ErrorCategory::Internal: return "internal";
    }
    return "internal";
}

namespace {

std::string format_message(ErrorCategory category, const std::string& module,
                           const std::string& operation, const std::string& detail) {
    std::string msg(category_name(category));
    msg += " [";
    msg += module;
    msg += "::";
    msg += operation;
    msg += "]: ";
    msg += detail;
    return msg;
}

}  // namespace

Error::Error(ErrorCategory category, std::string module, std::string operation,
             const std::string& detail)
    : std::runtime_error(format_message(category, module, operation, detail)),
      category_(category),
      module_(std::move(module)),
      operation_(std::move(operation)),
      detail_(detail) {}

void raise(ErrorCategory category, std::string module, std::string operation,
           const std::string& detail) {
    throw Error(category, std::move(module), std::move(operation), detail);
}

}  // namespace fastslow
