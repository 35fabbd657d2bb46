#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace xsdep {

enum class ErrorKind {
    // input / usage problems
    ParseError,
    UnbalancedPanel,
    DuplicateCell,
    InvalidArgument,
    DimensionGuard,
    DegenerateFamily,
    SpecMismatch,
    TruncTooLarge,
    DomainError,
    // numerical failures
    EigenFailure,
    SingularGram,
    SingularCov,
    SingularRestrictedCov,
    NegativeDelta,
    RankDeficient,
    NotPSD,
    ReplicationFailure,
};

constexpr std::string_view error_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::UnbalancedPanel: return "UnbalancedPanel";
        case ErrorKind::DuplicateCell: return "DuplicateCell";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::DimensionGuard: return "DimensionGuard";
        case ErrorKind::DegenerateFamily: return "DegenerateFamily";
        case ErrorKind::SpecMismatch: return "SpecMismatch";
        case ErrorKind::TruncTooLarge: return "TruncTooLarge";
        case ErrorKind::DomainError: return "DomainError";
        case ErrorKind::EigenFailure: return "EigenFailure";
        case ErrorKind::SingularGram: return "SingularGram";
        case ErrorKind::SingularCov: return "SingularCov";
        case ErrorKind::SingularRestrictedCov: return "SingularRestrictedCov";
        case ErrorKind::NegativeDelta: return "NegativeDelta";
        case ErrorKind::RankDeficient: return "RankDeficient";
        case ErrorKind::NotPSD: return "NotPSD";
        case ErrorKind::ReplicationFailure: return "ReplicationFailure";
    }
    return "Unknown";
}

/// True for failures of the numerics (as opposed to bad user input).
constexpr bool is_numerical(ErrorKind kind) {
    return kind >= ErrorKind::EigenFailure;
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(error_name(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    std::string_view name() const noexcept { return error_name(kind_); }

private:
    ErrorKind kind_;
};

}  // namespace xsdep
