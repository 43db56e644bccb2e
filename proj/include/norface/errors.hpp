#pragma once

#include <stdexcept>
#include <string>

namespace norface {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shape or dimension disagreement between operands.
struct DimensionError : Error {
    using Error::Error;
};

/// Input outside the numeric domain of an operation (non-finite, zero norm, ...).
struct NumericDomainError : Error {
    using Error::Error;
};

/// Input that is not a valid probability vector.
struct ProbabilityDomainError : Error {
    using Error::Error;
};

/// Inconsistent or invalid configuration (e.g. k > m in a router).
struct ConfigurationError : Error {
    using Error::Error;
};

/// Structurally valid input that is degenerate for the requested computation.
struct DegenerateInputError : Error {
    using Error::Error;
};

/// Operation received an empty input where at least one element is required.
struct EmptyInputError : Error {
    using Error::Error;
};

/// A forward evaluation produced an unusable result (non-finite loss, ...).
struct EvaluationError : Error {
    using Error::Error;
};

/// Malformed file content (configs, checkpoints, datasets, reports).
struct FormatError : Error {
    using Error::Error;
};

} // namespace norface
