#pragma once

#include <stdexcept>

namespace pvcd {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed binary or text input (bad magic, truncation, non-finite values).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Malformed CSV / timestamp / manifest line.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Input that is well-formed but mathematically unusable (e.g. a zero row).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

// Mismatched dimensions between matrices or weights.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class BuildError : public Error {
 public:
  using Error::Error;
};

class QueryError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pvcd
