#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace focalmed {

enum class ErrorCode {
    MalformedRecord,
    DanglingRelation,
    HierarchyCycle,
    DuplicateConcept,
    UnknownConcept,
    EmptyQuery,
    DuplicateSnippetId,
    UnknownDocId,
    NoJudgedDocs,
    IndexNotBuilt,
    NoRelevantJudgments,
    EngineUnavailable,
    InvalidArgument,
    BadConfig,
    BadSnapshot,
    Io,
};

std::string_view to_string(ErrorCode code) noexcept;

/// True for errors caused by bad input files (the CLI maps these to exit code 2).
bool is_data_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Parse failure inside a line-delimited file; carries the 1-based line number.
class RecordError : public Error {
public:
    RecordError(ErrorCode code, std::size_t line, const std::string& message)
        : Error(code, "line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace focalmed
