#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nahid {

enum class ErrorCode {
    MalformedFile,
    InvariantViolation,
    ImageTooSmall,
    InvalidConfig,
    SizeMismatch,
    ModelNotFound,
    MissingPrecomputedMap,
    BackendProcessFailure,
    NodeNotFound,
    EdgeNotFound,
    InvalidFraction,
    OutOfBounds,
    InfeasibleSpec,
    IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (the executor, the CLI) can map it to an outcome without parsing
/// message text.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace nahid
