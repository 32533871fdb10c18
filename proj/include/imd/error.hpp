#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace imd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument or configuration value.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Degenerate geometric input (zero vector, off-surface point, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. `line()` is 1-based.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Proximity graph has an isolated node.
class ConnectivityError : public Error {
public:
    ConnectivityError(std::size_t node, double suggested_bandwidth)
        : Error("node " + std::to_string(node) +
                " is isolated; smallest bandwidth connecting it: " +
                std::to_string(suggested_bandwidth)),
          node_(node),
          suggested_(suggested_bandwidth) {}
    std::size_t node() const noexcept { return node_; }
    /// Infinite when no other distinct point exists.
    double suggested_bandwidth() const noexcept { return suggested_; }

private:
    std::size_t node_;
    double suggested_;
};

/// Eigendecomposition or other numerical routine failed.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Integrator produced a non-finite or runaway state.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t step)
        : Error(what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

}  // namespace imd
