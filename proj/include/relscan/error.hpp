#pragma once

#include <stdexcept>
#include <string>

namespace relscan {

/// Raised when inputs or configuration violate an operation's preconditions.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised for failures that happen while a valid configuration is executing.
class RuntimeError : public std::runtime_error {
public:
    explicit RuntimeError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace relscan
