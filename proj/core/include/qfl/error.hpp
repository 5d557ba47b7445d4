#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace qfl {

/// Base class for every error raised by the simulator.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A user-supplied setting is out of range or inconsistent.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// Mismatched shapes, bad indices or misuse of an API contract.
class StructuralError : public Error {
  public:
    using Error::Error;
};

/// A feature vector does not fit the qubit register.
class DimensionError : public StructuralError {
  public:
    DimensionError(const std::string& what, int required_qubits)
        : StructuralError(what), required_qubits_(required_qubits) {}

    [[nodiscard]] int required_qubits() const noexcept { return required_qubits_; }

  private:
    int required_qubits_;
};

/// Malformed input file. Line numbers are 1-based; column indices 0-based.
class ParseError : public Error {
  public:
    ParseError(const std::string& what, std::size_t line,
               std::optional<std::size_t> column = std::nullopt)
        : Error(what), line_(line), column_(column) {}

    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] std::optional<std::size_t> column() const noexcept { return column_; }

  private:
    std::size_t line_;
    std::optional<std::size_t> column_;
};

}  // namespace qfl
