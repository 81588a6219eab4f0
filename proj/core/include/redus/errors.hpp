#pragma once

#include <stdexcept>
#include <string>

namespace redus {

// Invalid configuration: bad sizes, mismatched layer widths, impossible splits.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or unusable input data (files, feature vectors, masks).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values surfaced during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace redus
