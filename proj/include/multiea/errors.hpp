#pragma once

#include <stdexcept>
#include <string>

namespace multiea {

/// Invalid hyperparameters or command-line options. Maps to exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent input data. Maps to exit code 3.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Loss became NaN/Inf during training. Maps to exit code 4.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, std::size_t epoch)
        : std::runtime_error(what), epoch_(epoch) {}

    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

/// Numerical precondition violated inside a primitive (e.g. normalizing a zero vector).
class NumericError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

} // namespace multiea
