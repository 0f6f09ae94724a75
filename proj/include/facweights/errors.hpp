#pragma once

#include <stdexcept>
#include <string>

namespace facweights {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration: factor count out of range, bad option values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Argument outside the domain of an operation (bad effect index, length mismatch).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Malformed or non-finite input data.
class DataError : public Error {
public:
    using Error::Error;
};

/// The requested effects are not identified by the observed treatment combinations.
class IdentificationError : public Error {
public:
    using Error::Error;
};

/// The sandwich variance cannot be formed (singular bread matrix).
class VarianceError : public Error {
public:
    using Error::Error;
};

/// A comparison estimator (OLS, mean difference) cannot be computed.
class BaselineError : public Error {
public:
    using Error::Error;
};

/// A simulation study produced no usable replications.
class StudyError : public Error {
public:
    using Error::Error;
};

} // namespace facweights
