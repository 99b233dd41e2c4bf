#pragma once

#include <stdexcept>
#include <string>

namespace lowres {

// Base for every error the toolkit raises. Runtime failures (bad input data,
// I/O, backend trouble) derive from Error directly; ConfigError marks usage and
// configuration problems, which the CLI maps to a distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

}  // namespace lowres
