#pragma once

#include <stdexcept>
#include <string>

namespace anvil {

enum class ErrorKind {
    ZeroDim,
    ShapeMismatch,
    NonDivisible,
    NotMatMul,
    CNotInGL,
    HierarchyViolation,
    UnitCountMismatch,
    UpwardLoad,
    InvalidMoveDecomp,
    PatternMismatch,
    NoExecutableMatch,
    AmbiguousMatch,
    DuplicatePattern,
    SwizzleNotBijective,
    InvalidRefinement,
    UnboundVar,
    DivisionByZero,
    CapacityExceeded,
    ReuseBufferUnavailable,
    OwnershipViolation,
    UnsimulatableResidual,
    ParseError,
    InvalidTree,
    IoError,
};

inline const char* error_kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::ZeroDim: return "ZeroDim";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::NonDivisible: return "NonDivisible";
        case ErrorKind::NotMatMul: return "NotMatMul";
        case ErrorKind::CNotInGL: return "CNotInGL";
        case ErrorKind::HierarchyViolation: return "HierarchyViolation";
        case ErrorKind::UnitCountMismatch: return "UnitCountMismatch";
        case ErrorKind::UpwardLoad: return "UpwardLoad";
        case ErrorKind::InvalidMoveDecomp: return "InvalidMoveDecomp";
        case ErrorKind::PatternMismatch: return "PatternMismatch";
        case ErrorKind::NoExecutableMatch: return "NoExecutableMatch";
        case ErrorKind::AmbiguousMatch: return "AmbiguousMatch";
        case ErrorKind::DuplicatePattern: return "DuplicatePattern";
        case ErrorKind::SwizzleNotBijective: return "SwizzleNotBijective";
        case ErrorKind::InvalidRefinement: return "InvalidRefinement";
        case ErrorKind::UnboundVar: return "UnboundVar";
        case ErrorKind::DivisionByZero: return "DivisionByZero";
        case ErrorKind::CapacityExceeded: return "CapacityExceeded";
        case ErrorKind::ReuseBufferUnavailable: return "ReuseBufferUnavailable";
        case ErrorKind::OwnershipViolation: return "OwnershipViolation";
        case ErrorKind::UnsimulatableResidual: return "UnsimulatableResidual";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::InvalidTree: return "InvalidTree";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

// All fallible operations throw Error; validation instead collects
// Violation records so a whole tree can be diagnosed in one pass.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(std::string(error_kind_name(kind)) + ": " + msg), kind_(kind) {}

    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
    throw Error(kind, msg);
}

} // namespace anvil
