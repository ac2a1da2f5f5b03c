#pragma once

#include <stdexcept>
#include <string>

namespace srpn {

// Error categories the CLI maps to distinct exit codes.

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct MissingFileError : std::runtime_error {
  explicit MissingFileError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace srpn
