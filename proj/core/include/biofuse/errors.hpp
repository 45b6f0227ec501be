#pragma once

#include <stdexcept>
#include <string>

namespace biofuse {

// Invalid user input: bad arguments, out-of-range labels, API misuse.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration file or field. The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape incompatibility; message names the op and the shapes.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite value produced by a forward op, or divergence during training.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// File I/O: missing files, bad magic, truncation, checksum mismatch.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace biofuse
