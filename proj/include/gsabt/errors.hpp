#pragma once

#include <stdexcept>
#include <string>

namespace gsabt {

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape / dimension mismatch.
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration value or contradictory option set.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf surfaced in a forward pass, degenerate softmax row, diverged loss.
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Malformed or truncated file payload.
struct FormatError : Error {
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Referenced file missing / unreadable / unwritable.
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace gsabt
