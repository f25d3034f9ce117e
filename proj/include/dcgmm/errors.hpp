#pragma once

#include <stdexcept>
#include <string>

namespace dcgmm {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid architecture, parameters or options. Maps to CLI exit code 2.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Tensor dimension mismatch between producer and consumer.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Malformed input file (IDX, checkpoint, architecture text).
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Filesystem failure while reading or writing artifacts.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// A selector row that cannot drive component selection.
class InvalidControlError : public Error {
public:
    explicit InvalidControlError(const std::string& msg) : Error(msg) {}
};

// Class label outside [0, M) or a malformed one-hot row.
class InvalidLabelError : public Error {
public:
    explicit InvalidLabelError(const std::string& msg) : Error(msg) {}
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& msg) : Error(msg) {}
};

}  // namespace dcgmm
