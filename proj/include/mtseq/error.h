#pragma once

#include <stdexcept>
#include <string>

namespace mtseq {

// Configuration / validation failures: bad manifests, dangling ids,
// mismatched vocabularies. Raised before any compute when possible.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor shape disagreements. Messages name both shapes.
class DimensionError : public std::runtime_error {
 public:
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Out-of-range token or index, e.g. a target id >= vocab size.
class IndexError : public std::runtime_error {
 public:
  explicit IndexError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values encountered in a forward/backward/update path.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid call sequence, e.g. backward without a cached forward.
class StateError : public std::runtime_error {
 public:
  explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed bracketed-tree text; carries the offending position.
class TreeParseError : public std::runtime_error {
 public:
  TreeParseError(const std::string& msg, std::size_t position)
      : std::runtime_error(msg + " (at position " + std::to_string(position) + ")"),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

// Bad or empty model input (e.g. an empty source sequence).
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Metric undefined on the given support (empty corpus, zero tokens).
class MetricError : public std::runtime_error {
 public:
  explicit MetricError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / serialization failures.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mtseq
