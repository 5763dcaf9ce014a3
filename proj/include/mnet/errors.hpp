// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mnet {

// Every failure surfaced by the library derives from Error; the C API maps
// each kind onto a stable status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension mismatches and invalid configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Zero-norm vectors, vanishing weight denominators.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Calling an operation out of sequence, e.g. backward without a forward cache.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Evaluation/training protocol violations (split overlap, bad labels, empty
// pair lists).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed binary input. `offset` is the byte position of the problem.
class ParseError : public Error {
 public:
  enum class Kind { BadMagic, BadVersion, BadDimension, Truncated, NonFinite, Inconsistent };

  ParseError(Kind kind, const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        kind_(kind),
        offset_(offset) {}
  Kind kind() const noexcept { return kind_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  Kind kind_;
  std::uint64_t offset_;
};

// Finite-difference oracle hit a non-finite function value.
class OracleError : public Error {
 public:
  using Error::Error;
};

// Training loss became non-finite.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace mnet
