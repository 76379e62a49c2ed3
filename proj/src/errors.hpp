#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fastslow {

/// Every failure path in the library maps to exactly one of these.
/// The numeric values are shared with the C API status codes.
enum class ErrorCategory : int {
    ConfigInvalid = 1,
    IntegrationDiverged = 2,
    NearSingular = 3,
    TooFewSamples = 4,
    InsufficientLags = 5,
    StepSizeGuard = 6,
    NotPsd = 7,
    DimensionMismatch = 8,
    OutOfHull = 9,
    ModeCountTooLarge = 10,
    Misaligned = 11,
    TrajectoryTooShort = 12,
    NonFinite = 13,
    Io = 14,
    CheckFailed = 15,
    InvalidArgument = 16,
    Internal = 17,
};

std::string_view category_name(ErrorCategory category) noexcept;

/// Library error carrying its category and where it was raised.
class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, std::string module, std::string operation,
          const std::string& detail);

    ErrorCategory category() const noexcept { return category_; }
    const std::string& module() const noexcept { return module_; }
    const std::string& operation() const noexcept { return operation_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCategory category_;
    std::string module_;
    std::string operation_;
    std::string detail_;
};

[[noreturn]] void raise(ErrorCategory category, std::string module, std::string operation,
                        const std::string& detail);

}  // namespace fastslow
