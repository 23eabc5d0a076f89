#include "cqcd/error.hpp"

namespace cqcd {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidParameter: return "invalid parameter";
        case ErrorKind::AbsoluteContinuityViolation: return "absolute continuity violation";
        case ErrorKind::DivergenceInfinite: return "divergence infinite";
        case ErrorKind::DegeneratePolicy: return "degenerate policy";
        case ErrorKind::NoSolution: return "no solution";
        case ErrorKind::InfeasibleBudget: return "infeasible budget";
        case ErrorKind::InvalidInput: return "invalid input";
        case ErrorKind::InvalidDistribution: return "invalid distribution";
        case ErrorKind::SolverFailure: return "solver failure";
        case ErrorKind::UnsupportedModel: return "unsupported model";
        case ErrorKind::CalibrationFailure: return "calibration failure";
        case ErrorKind::SchemaError: return "schema error";
    }
    return "error";
}

}  // namespace cqcd
