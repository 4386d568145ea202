#include "normflow/errors.hpp"

namespace normflow {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidResolution: return "invalid-resolution";
        case ErrorCode::InconsistentDimension: return "inconsistent-dimension";
        case ErrorCode::InvalidExtents: return "invalid-extents";
        case ErrorCode::GeometryMismatch: return "geometry-mismatch";
        case ErrorCode::NonFiniteState: return "non-finite-state";
        case ErrorCode::NonpositiveField: return "nonpositive-field";
        case ErrorCode::ZeroDenominator: return "zero-denominator";
        case ErrorCode::DegenerateField: return "degenerate-field";
        case ErrorCode::InvalidFlowSpec: return "invalid-flow-spec";
        case ErrorCode::InvalidInitialData: return "invalid-initial-data";
        case ErrorCode::LinearSolveFailure: return "linear-solve-failure";
        case ErrorCode::StepSizeCollapse: return "step-size-collapse";
        case ErrorCode::WrongFlowVariant: return "wrong-flow-variant";
        case ErrorCode::MissingChannel: return "missing-channel";
        case ErrorCode::NonConvergence: return "non-convergence";
        case ErrorCode::StatusMismatch: return "status-mismatch";
        case ErrorCode::InvalidConfig: return "invalid-config";
        case ErrorCode::Io: return "io";
    }
    return "unknown";
}

}  // namespace normflow
