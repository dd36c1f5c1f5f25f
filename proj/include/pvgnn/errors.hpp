#pragma once

#include <stdexcept>
#include <string>

namespace pvgnn {

// Tensor/operation shape incompatibilities.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Non-finite values where finite ones are required (losses, gradients).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed external input; carries a 1-based row number when known.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg, long row = -1)
      : std::runtime_error(row >= 0 ? msg + " (row " + std::to_string(row) + ")" : msg),
        row_(row) {}
  long row() const { return row_; }

 private:
  long row_;
};

// Requested time window has insufficient history.
class WindowError : public std::out_of_range {
 public:
  explicit WindowError(const std::string& msg) : std::out_of_range(msg) {}
};

// A node whose statistics make an operation meaningless (e.g. max power 0).
class DegenerateNodeError : public std::runtime_error {
 public:
  DegenerateNodeError(const std::string& msg, int node)
      : std::runtime_error(msg + " (node " + std::to_string(node) + ")"), node_(node) {}
  int node() const { return node_; }

 private:
  int node_;
};

// Metric requested over an empty or all-masked sample set.
class UndefinedMetricError : public std::runtime_error {
 public:
  explicit UndefinedMetricError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void check_arg(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

inline void check_shape(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

}  // namespace pvgnn
