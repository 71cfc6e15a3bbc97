#pragma once

#include <stdexcept>
#include <string>

namespace hyperload {

/** Base class for every error raised by the library. */
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input file lacks a required column or has a malformed header.
class SchemaError : public Error { using Error::Error; };
/// No usable rows survived ingestion.
class EmptyDataError : public Error { using Error::Error; };
/// A segment is too short for the requested window geometry.
class InsufficientDataError : public Error { using Error::Error; };
/// Invalid configuration value or combination.
class ConfigError : public Error { using Error::Error; };
/// Matrix or vector dimensions do not agree.
class ShapeError : public Error { using Error::Error; };
/// Non-finite values where finite ones are required.
class NumericError : public Error { using Error::Error; };
/// Checkpoint or weights file is unreadable or incompatible.
class CheckpointError : public Error { using Error::Error; };
/// Index outside the valid range.
class IndexError : public Error { using Error::Error; };
/// File system failure.
class IoError : public Error { using Error::Error; };

} // namespace hyperload
