#pragma once

#include <stdexcept>
#include <string>

namespace dualinf {

// Error categories map onto CLI exit codes: config/usage -> 2, io -> 3,
// numeric -> 4. Everything else is a programming-contract violation.

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// A measurement probe failed its accuracy bar; downstream metrics would be
// untrustworthy.
struct ProbeError : std::runtime_error {
    explicit ProbeError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dualinf
