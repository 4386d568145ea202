#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace normflow {

enum class ErrorCode {
    InvalidResolution,
    InconsistentDimension,
    InvalidExtents,
    GeometryMismatch,
    NonFiniteState,
    NonpositiveField,
    ZeroDenominator,
    DegenerateField,
    InvalidFlowSpec,
    InvalidInitialData,
    LinearSolveFailure,
    StepSizeCollapse,
    WrongFlowVariant,
    MissingChannel,
    NonConvergence,
    StatusMismatch,
    InvalidConfig,
    Io,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; `code()` lets callers and tests
// distinguish the failure without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace normflow
