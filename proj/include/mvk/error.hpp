#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mvk {

enum class ErrorCode {
    NondegeneracyViolation,
    NegativeIntensity,
    NonconvexControlCost,
    NonlinearDrift,
    DegenerateRange,
    GridMismatch,
    CFLViolation,
    ControlOutOfBox,
    FixedPointDiverged,
    ArgumentConflict,
    NonfiniteInput,
    DirectionLeavesBox,
    PicardStalled,
    SeedRequired,
    EpsBelowGrid,
    ConfigParse,
    UnknownExperiment,
    InvalidArgument,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::NondegeneracyViolation: return "NondegeneracyViolation";
        case ErrorCode::NegativeIntensity: return "NegativeIntensity";
        case ErrorCode::NonconvexControlCost: return "NonconvexControlCost";
        case ErrorCode::NonlinearDrift: return "NonlinearDrift";
        case ErrorCode::DegenerateRange: return "DegenerateRange";
        case ErrorCode::GridMismatch: return "GridMismatch";
        case ErrorCode::CFLViolation: return "CFLViolation";
        case ErrorCode::ControlOutOfBox: return "ControlOutOfBox";
        case ErrorCode::FixedPointDiverged: return "FixedPointDiverged";
        case ErrorCode::ArgumentConflict: return "ArgumentConflict";
        case ErrorCode::NonfiniteInput: return "NonfiniteInput";
        case ErrorCode::DirectionLeavesBox: return "DirectionLeavesBox";
        case ErrorCode::PicardStalled: return "PicardStalled";
        case ErrorCode::SeedRequired: return "SeedRequired";
        case ErrorCode::EpsBelowGrid: return "EpsBelowGrid";
        case ErrorCode::ConfigParse: return "ConfigParse";
        case ErrorCode::UnknownExperiment: return "UnknownExperiment";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace mvk
