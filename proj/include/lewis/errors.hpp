#pragma once

#include <stdexcept>
#include <string>

namespace lewis {

// Invalid shapes, invalid configuration values, malformed files.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated call contract (e.g. backward from a non-scalar node).
struct ContractError : std::logic_error {
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Numeric domain failures: log of a non-positive value, NaN loss, NaN gradient.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace lewis
