#include "casework/error.hpp"

namespace casework {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::PreconditionViolation: return "PreconditionViolation";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::ExtractionFailed: return "ExtractionFailed";
    case ErrorKind::QualityUndefined: return "QualityUndefined";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::NotFound: return "NotFound";
    case ErrorKind::EmptyQuery: return "EmptyQuery";
    case ErrorKind::MissingVariable: return "MissingVariable";
    case ErrorKind::InvalidTemplate: return "InvalidTemplate";
    case ErrorKind::BudgetExceeded: return "BudgetExceeded";
    case ErrorKind::BackendError: return "BackendError";
    case ErrorKind::UnscriptedRequest: return "UnscriptedRequest";
    case ErrorKind::MalformedAction: return "MalformedAction";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::FormParseError: return "FormParseError";
    case ErrorKind::AllegationParseError: return "AllegationParseError";
    case ErrorKind::DraftMismatch: return "DraftMismatch";
    case ErrorKind::MissingStage: return "MissingStage";
    case ErrorKind::AssemblyError: return "AssemblyError";
    case ErrorKind::ChecklistParseError: return "ChecklistParseError";
    case ErrorKind::JudgmentParseError: return "JudgmentParseError";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::DimensionError: return "DimensionError";
    case ErrorKind::Undefined: return "Undefined";
    case ErrorKind::SectionNotFound: return "SectionNotFound";
    case ErrorKind::MalformedInstruction: return "MalformedInstruction";
    case ErrorKind::LabelParseError: return "LabelParseError";
    case ErrorKind::StaleUpstream: return "StaleUpstream";
    case ErrorKind::StageFailed: return "StageFailed";
    case ErrorKind::Locked: return "Locked";
    }
    return "Unknown";
}

} // namespace casework
