#pragma once

#include <stdexcept>
#include <string>

namespace esrf {

/// Caller handed us something invalid (bad index, shape mismatch, ...).
struct InputError : std::invalid_argument {
    explicit InputError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// A data file could not be parsed; carries the 1-based line number.
struct ParseError : std::runtime_error {
    ParseError(const std::string& path, std::size_t line, const std::string& msg)
        : std::runtime_error(path + ":" + std::to_string(line) + ": " + msg), line_number(line) {}
    std::size_t line_number;
};

/// Inconsistent experiment configuration.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace esrf
