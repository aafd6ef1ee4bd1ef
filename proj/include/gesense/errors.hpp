#pragma once

#include <stdexcept>
#include <string>

namespace gesense {

/// Malformed input data (bad CSV row, bad JSON field).
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Violated precondition or data invariant.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad or incomplete run configuration.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Simulation left its validity envelope (below surface, diverging controller).
class SimulationFault : public std::runtime_error {
public:
    explicit SimulationFault(const std::string& msg) : std::runtime_error(msg) {}
};

/// Training diverged (non-finite loss).
class TrainingFault : public std::runtime_error {
public:
    explicit TrainingFault(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gesense
