#pragma once

#include <stdexcept>
#include <string>

namespace aim {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct StateError : std::runtime_error {
  explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A pipeline stage input that an earlier stage should have produced is
// missing; the message names that stage.
struct PrerequisiteError : std::runtime_error {
  explicit PrerequisiteError(const std::string& msg)
      : std::runtime_error(msg) {}
};

}  // namespace aim
