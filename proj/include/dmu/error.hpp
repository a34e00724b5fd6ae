#pragma once

#include <stdexcept>
#include <string>

namespace dmu {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shapes that do not conform.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Normalisation of a vector whose norm is at or below the degeneracy threshold.
class DegenerateNormError : public Error {
public:
    using Error::Error;
};

/// Caller broke a documented precondition (non-scalar loss, non-finite data, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

class EmptyInputError : public Error {
public:
    using Error::Error;
};

/// Malformed input file.
class FormatError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Inconsistent data (overlapping splits, incomplete evaluation grids, ...).
class IntegrityError : public Error {
public:
    using Error::Error;
};

/// A metric that has no value for the given input (e.g. AUC with one class).
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss or gradient during optimisation.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// Artifacts that cannot be used together (e.g. checkpoint vs. embedding table).
class IncompatibleArtifactError : public Error {
public:
    using Error::Error;
};

}  // namespace dmu
