#pragma once

#include <stdexcept>
#include <string>

namespace udjfl {

// Invalid configuration supplied by the caller (bad dimensions, bad preset
// parameters, malformed experiment config). Maps to CLI exit code 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/matrix dimension mismatch.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Value outside the mathematical domain of an operation (empty batch,
// non-positive upsilon, non-finite logit, ...).
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Degenerate statistical input, e.g. zero variance in a correlation.
// Never silently mapped to a default value.
struct DegenerateInputError : DomainError {
    explicit DegenerateInputError(const std::string& msg) : DomainError(msg) {}
};

// Malformed binary file (IDX or dataset container) or checksum mismatch.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values produced during training; carries the failing round.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace udjfl
