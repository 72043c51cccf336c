#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace temba {

// Shape mismatch, bad argument, or a violated precondition. Maps to CLI exit 1.
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// NaN/Inf produced by a forward op or seen in a gradient. Maps to CLI exit 2.
class NumericFault : public std::runtime_error {
 public:
  explicit NumericFault(const std::string& what) : std::runtime_error(what) {}
};

// Malformed on-disk data (bad magic, truncation, schema errors). Maps to CLI exit 3.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_ = 0;
};

// Filesystem failures. Maps to CLI exit 3.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

}  // namespace temba
