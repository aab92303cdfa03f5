#include "focalmed/errors.hpp"

namespace focalmed {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::MalformedRecord: return "MalformedRecord";
        case ErrorCode::DanglingRelation: return "DanglingRelation";
        case ErrorCode::HierarchyCycle: return "HierarchyCycle";
        case ErrorCode::DuplicateConcept: return "DuplicateConcept";
        case ErrorCode::UnknownConcept: return "UnknownConcept";
        case ErrorCode::EmptyQuery: return "EmptyQuery";
        case ErrorCode::DuplicateSnippetId: return "DuplicateSnippetId";
        case ErrorCode::UnknownDocId: return "UnknownDocId";
        case ErrorCode::NoJudgedDocs: return "NoJudgedDocs";
        case ErrorCode::IndexNotBuilt: return "IndexNotBuilt";
        case ErrorCode::NoRelevantJudgments: return "NoRelevantJudgments";
        case ErrorCode::EngineUnavailable: return "EngineUnavailable";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::BadConfig: return "BadConfig";
        case ErrorCode::BadSnapshot: return "BadSnapshot";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

bool is_data_error(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::MalformedRecord:
        case ErrorCode::DanglingRelation:
        case ErrorCode::HierarchyCycle:
        case ErrorCode::DuplicateConcept:
        case ErrorCode::DuplicateSnippetId:
        case ErrorCode::UnknownDocId:
        case ErrorCode::NoJudgedDocs:
        case ErrorCode::BadConfig:
        case ErrorCode::BadSnapshot:
        case ErrorCode::Io:
            return true;
        default:
            return false;
    }
}

} // namespace focalmed
