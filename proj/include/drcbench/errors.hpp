#pragma once

#include <stdexcept>
#include <string>

namespace drc {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or unsupported file contents (WAV, spectrogram cache, checkpoint).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Invalid argument or configuration value.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Parameter outside its documented domain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Tensor or layer shapes that do not chain.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced or consumed by a numeric routine.
class NumericError : public Error {
public:
    using Error::Error;
};

/// API misuse, e.g. calling backward twice on the same graph.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Bad training/regression data (NaN features, row mismatch).
class DataError : public Error {
public:
    using Error::Error;
};

/// Evaluation protocol cannot be honoured (too few loops to group-split).
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// File system failure; the message names the path.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace drc
