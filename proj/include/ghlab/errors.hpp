#pragma once

#include <stdexcept>
#include <string>

namespace ghlab {

/// Point or parameter outside the domain of a model end.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// Gauge evaluated where the fixed gauge is singular (ALF poles).
struct SingularGaugeError : DomainError {
    using DomainError::DomainError;
};

/// Wrong kind of object (mode-reduced where full is needed, non-ALF end on the radial path, ...).
struct TypeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct RangeError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

struct PreconditionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Operation applied twice to an object that only allows it once.
struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};

/// Matrix singular to the requested tolerance.
struct SingularityError : std::runtime_error {
    SingularityError(const std::string& what, double sigma)
        : std::runtime_error(what), sigma_estimate(sigma) {}
    double sigma_estimate;
};

struct ConfigError : std::runtime_error {
    ConfigError(const std::string& what, int line_no = 0)
        : std::runtime_error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + what : what),
          line(line_no) {}
    int line;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace ghlab
