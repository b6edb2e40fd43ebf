#pragma once

#include <stdexcept>
#include <string>

namespace gapaudit {

// Malformed input streams, formulas, config files.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally valid input whose content violates a data contract.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Bad configuration values or missing referenced paths.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Violation of an analysis protocol (e.g. a high-risk column in a baseline matrix).
class ProtocolError : public std::runtime_error {
public:
    explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gapaudit
