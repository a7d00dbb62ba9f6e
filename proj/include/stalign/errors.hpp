#pragma once

#include <stdexcept>
#include <string>

namespace stalign {

/// Operand shapes are incompatible.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An API precondition other than shape agreement is violated.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Input exceeds a configured capacity (frames, patches, tokens).
class CapacityError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Inconsistent or unusable data (empty series, single-class labels, ...).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A study lacks a (type, view) pair required by the assembly recipe.
class ExclusionError : public DataError {
public:
    using DataError::DataError;
};

/// A file could not be parsed; the message carries line or byte offset.
class ParseError : public DataError {
public:
    using DataError::DataError;
};

/// Filesystem failure (unreadable, unwritable, locked).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration value or incompatible artifact version.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace stalign
