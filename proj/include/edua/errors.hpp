#pragma once

#include <stdexcept>
#include <string>

namespace edua {

// Error taxonomy shared by the whole library. The CLI maps these onto
// exit codes: configuration/validation/parse/data/input -> 2, numeric -> 3.

struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error("dimension error: " + msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error("configuration error: " + msg) {}
};

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error("parse error: " + msg) {}
};

struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error("validation error: " + msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error("data error: " + msg) {}
};

struct InputError : std::runtime_error {
  explicit InputError(const std::string& msg) : std::runtime_error("input error: " + msg) {}
};

struct ScaleError : std::runtime_error {
  explicit ScaleError(const std::string& msg) : std::runtime_error("scale error: " + msg) {}
};

struct CompatError : std::runtime_error {
  explicit CompatError(const std::string& msg) : std::runtime_error("compatibility error: " + msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error("I/O error: " + msg) {}
};

}  // namespace edua
