#pragma once

#include <stdexcept>
#include <string>

namespace gms {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameters or inputs detected before any numerical work.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A precondition relating two objects does not hold (e.g. the kernel
/// of the fine operator is not representable by the prolongation).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Malformed, truncated or corrupted binary file.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Factorization or eigensolver failure.
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace gms
