#include "mmeval/error.hpp"

#include <array>
#include <utility>

namespace mmeval {

namespace {

constexpr std::array<std::pair<ErrorCode, std::string_view>, 20> kNames{{
    {ErrorCode::UNKNOWN_TASK, "UNKNOWN_TASK"},
    {ErrorCode::INDEX_OUT_OF_RANGE, "INDEX_OUT_OF_RANGE"},
    {ErrorCode::DUPLICATE_SUBMISSION, "DUPLICATE_SUBMISSION"},
    {ErrorCode::MALFORMED_PAYLOAD, "MALFORMED_PAYLOAD"},
    {ErrorCode::TASK_NOT_FINALIZED, "TASK_NOT_FINALIZED"},
    {ErrorCode::TASK_NOT_PROCESSED, "TASK_NOT_PROCESSED"},
    {ErrorCode::DUPLICATE_TASK, "DUPLICATE_TASK"},
    {ErrorCode::UNKNOWN_PROCESSOR, "UNKNOWN_PROCESSOR"},
    {ErrorCode::INVALID_CONFIG, "INVALID_CONFIG"},
    {ErrorCode::QUALITY_CHECK_FAILED, "QUALITY_CHECK_FAILED"},
    {ErrorCode::SOURCE_UNREADABLE, "SOURCE_UNREADABLE"},
    {ErrorCode::NO_SUBMISSIONS, "NO_SUBMISSIONS"},
    {ErrorCode::UNKNOWN_SESSION, "UNKNOWN_SESSION"},
    {ErrorCode::SESSION_CLOSED, "SESSION_CLOSED"},
    {ErrorCode::SESSION_NOT_CLOSED, "SESSION_NOT_CLOSED"},
    {ErrorCode::INVALID_SCORE, "INVALID_SCORE"},
    {ErrorCode::ORDER_VIOLATION, "ORDER_VIOLATION"},
    {ErrorCode::BACKEND_ERROR, "BACKEND_ERROR"},
    {ErrorCode::SERVER_UNREACHABLE, "SERVER_UNREACHABLE"},
    {ErrorCode::INTERNAL, "INTERNAL"},
}};

}  // namespace

std::string_view to_string(ErrorCode code) {
    for (const auto& [c, name] : kNames) {
        if (c == code) return name;
    }
    return "MALFORMED_PAYLOAD";
}

ErrorCode error_code_from_string(std::string_view name) {
    for (const auto& [c, n] : kNames) {
        if (n == name) return c;
    }
    throw EvalError(ErrorCode::MALFORMED_PAYLOAD, "unknown error code: " + std::string(name));
}

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::UNKNOWN_TASK:
        case ErrorCode::UNKNOWN_SESSION:
        case ErrorCode::UNKNOWN_PROCESSOR:
            return 404;
        case ErrorCode::DUPLICATE_SUBMISSION:
        case ErrorCode::DUPLICATE_TASK:
        case ErrorCode::SESSION_CLOSED:
        case ErrorCode::SESSION_NOT_CLOSED:
        case ErrorCode::TASK_NOT_FINALIZED:
        case ErrorCode::TASK_NOT_PROCESSED:
        case ErrorCode::ORDER_VIOLATION:
        case ErrorCode::NO_SUBMISSIONS:
            return 409;
        case ErrorCode::QUALITY_CHECK_FAILED:
        case ErrorCode::SOURCE_UNREADABLE:
            return 422;
        case ErrorCode::BACKEND_ERROR:
        case ErrorCode::SERVER_UNREACHABLE:
            return 502;
        case ErrorCode::INTERNAL:
            return 500;
        default:
            return 400;
    }
}

}  // namespace mmeval
