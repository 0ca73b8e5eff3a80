#pragma once

#include <stdexcept>
#include <string>

namespace lmforge {

// Domain error types. Everything derives from LmError so callers can catch
// the whole family at the CLI boundary.
struct LmError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeMismatch : LmError {
    using LmError::LmError;
};
struct InvalidTarget : LmError {
    using LmError::LmError;
};
struct InvalidTokenId : LmError {
    using LmError::LmError;
};
struct NotScalarLoss : LmError {
    using LmError::LmError;
};
struct StreamTooShort : LmError {
    using LmError::LmError;
};
struct EmptyStream : LmError {
    using LmError::LmError;
};
struct UnseenContext : LmError {
    using LmError::LmError;
};
struct NotTriggered : LmError {
    using LmError::LmError;
};
struct AllUnfrozen : LmError {
    using LmError::LmError;
};
struct NoDescent : LmError {
    using LmError::LmError;
};
struct ZeroProbability : LmError {
    using LmError::LmError;
};
struct EmptyPrompt : LmError {
    using LmError::LmError;
};
struct MissingCheckpoint : LmError {
    using LmError::LmError;
};
struct IoError : LmError {
    using LmError::LmError;
};
struct EmptyCorpus : LmError {
    using LmError::LmError;
};
struct ConfigError : LmError {
    using LmError::LmError;
};

}  // namespace lmforge
