#pragma once

#include <stdexcept>
#include <string>

namespace jcd {

// Shape/dimension mismatches between tensors.
struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Invalid argument values (k out of range, even kernel, non-scalar loss, ...).
struct ArgError : std::invalid_argument {
    explicit ArgError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Bad numeric data: NaN/Inf produced by an op or found in an input file.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file contents (magic, version, truncation).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Inconsistent run/model/dataset configuration.
struct ConfigError : std::invalid_argument {
    explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

} // namespace jcd
