#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mmeval {

// Closed set of error codes carried in the wire-level error envelope.
enum class ErrorCode {
    UNKNOWN_TASK,
    INDEX_OUT_OF_RANGE,
    DUPLICATE_SUBMISSION,
    MALFORMED_PAYLOAD,
    TASK_NOT_FINALIZED,
    TASK_NOT_PROCESSED,
    DUPLICATE_TASK,
    UNKNOWN_PROCESSOR,
    INVALID_CONFIG,
    QUALITY_CHECK_FAILED,
    SOURCE_UNREADABLE,
    NO_SUBMISSIONS,
    UNKNOWN_SESSION,
    SESSION_CLOSED,
    SESSION_NOT_CLOSED,
    INVALID_SCORE,
    ORDER_VIOLATION,
    BACKEND_ERROR,
    SERVER_UNREACHABLE,
    INTERNAL,
};

std::string_view to_string(ErrorCode code);
ErrorCode error_code_from_string(std::string_view name);

// HTTP status used when the error crosses the wire.
int http_status(ErrorCode code);

class EvalError : public std::runtime_error {
public:
    EvalError(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace mmeval
