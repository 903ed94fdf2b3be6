#pragma once

#include <stdexcept>
#include <string>

namespace queens {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration: bad block schema, unknown names, dangling
/// references, invalid distribution parameters. Maps to CLI exit code 2.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

/// Failure while evaluating models or running a method. Maps to CLI
/// exit code 3.
class EvaluationError : public Error {
public:
    explicit EvaluationError(const std::string& what) : Error(what) {}
};

}  // namespace queens
