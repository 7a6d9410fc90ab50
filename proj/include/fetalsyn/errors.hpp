#pragma once

#include <stdexcept>
#include <string>

namespace fetalsyn {

// Error classes map one-to-one onto the CLI exit codes (2, 3, 4).

class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fetalsyn
