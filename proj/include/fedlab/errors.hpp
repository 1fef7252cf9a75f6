#pragma once

#include <stdexcept>
#include <string>

namespace fedlab {

// Error taxonomy. The CLI maps these to exit codes: ConfigError -> 1,
// DataFormatError -> 2, DivergenceError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataFormatError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int round, int client)
      : Error(what), round_(round), client_(client) {}
  int round() const { return round_; }
  int client() const { return client_; }

 private:
  int round_ = -1;
  int client_ = -1;
};

class DegeneratePointError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedlab
