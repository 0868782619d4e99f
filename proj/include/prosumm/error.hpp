#pragma once

#include <stdexcept>
#include <string>

namespace prosumm {

/// Base class for all harness errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or invalid question bank content.
class BankError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration (files, model configs, generator settings, CLI input).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A model backend failed after exhausting its retry budget.
class BackendError : public Error {
public:
    using Error::Error;
};

/// The backend replied, but not in the expected wire shape.
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Filesystem-level failure, message carries the path.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace prosumm
