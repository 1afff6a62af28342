#pragma once

#include <stdexcept>
#include <string>

namespace sokorl {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

struct GenerationExhausted : std::runtime_error {
  explicit GenerationExhausted(const std::string& msg) : std::runtime_error(msg) {}
};

struct UnsolvableState : std::runtime_error {
  explicit UnsolvableState(const std::string& msg) : std::runtime_error(msg) {}
};

struct InconsistentLabel : std::runtime_error {
  explicit InconsistentLabel(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyBuffer : std::runtime_error {
  explicit EmptyBuffer(const std::string& msg) : std::runtime_error(msg) {}
};

struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace sokorl
