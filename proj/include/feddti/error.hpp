#pragma once

#include <stdexcept>
#include <string>

namespace feddti {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files (CSV, manifests, checkpoints).
class InputError : public Error {
 public:
  using Error::Error;
};

// Invalid experiment configuration or parameters. The CLI maps this to exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace feddti
