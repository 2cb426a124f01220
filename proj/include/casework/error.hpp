#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace casework {

enum class ErrorKind {
    PreconditionViolation,
    IoError,
    ConfigError,
    ExtractionFailed,
    QualityUndefined,
    EmptyCorpus,
    NotFound,
    EmptyQuery,
    MissingVariable,
    InvalidTemplate,
    BudgetExceeded,
    BackendError,
    UnscriptedRequest,
    MalformedAction,
    ParseError,
    FormParseError,
    AllegationParseError,
    DraftMismatch,
    MissingStage,
    AssemblyError,
    ChecklistParseError,
    JudgmentParseError,
    EmptyInput,
    DimensionError,
    Undefined,
    SectionNotFound,
    MalformedInstruction,
    LabelParseError,
    StaleUpstream,
    StageFailed,
    Locked,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers (and the
/// HTTP service) can map it without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) {
        throw Error(ErrorKind::PreconditionViolation, message);
    }
}

} // namespace casework
