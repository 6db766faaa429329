#pragma once

#include <stdexcept>
#include <string>

namespace softsphere {

/// Invalid parameters for constructing a scene, camera or run.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Data that violates a domain invariant (non-positive radius, NaN, dimension mismatch).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed file contents.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Failure to open, read or write a file.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition between two pipeline stages does not hold (e.g. a stale backward buffer).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Optimization produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, long step) : std::runtime_error(what), step_(step) {}
    long step() const noexcept { return step_; }

private:
    long step_;
};

}  // namespace softsphere
