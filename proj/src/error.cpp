#include "nahid/error.hpp"

namespace nahid {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::ModelNotFound: return "ModelNotFound";
    case ErrorCode::MissingPrecomputedMap: return "MissingPrecomputedMap";
    case ErrorCode::BackendProcessFailure: return "BackendProcessFailure";
    case ErrorCode::NodeNotFound: return "NodeNotFound";
    case ErrorCode::EdgeNotFound: return "EdgeNotFound";
    case ErrorCode::InvalidFraction: return "InvalidFraction";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::InfeasibleSpec: return "InfeasibleSpec";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

} // namespace nahid
