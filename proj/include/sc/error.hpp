#pragma once

#include <stdexcept>
#include <string>

namespace sc {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary payload (bad length, non-finite values).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Text parse failure; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, int line)
      : Error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class InvalidParam : public Error {
 public:
  using Error::Error;
};

/// Operation applied to the wrong descriptor kind (polar vs cartesian).
class KindError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

/// Place ids must be strictly increasing.
class OrderError : public Error {
 public:
  using Error::Error;
};

class EmptyDatabaseError : public Error {
 public:
  using Error::Error;
};

/// Unrecognized or truncated database file.
class VersionError : public Error {
 public:
  using Error::Error;
};

/// Scan/pose sequence mismatch.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

}  // namespace sc
