#pragma once

#include <stdexcept>
#include <string>

namespace ranklab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

// Carries the 1-based line number of the offending input line.
class ParseError : public Error {
 public:
  ParseError(int line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Exact enumeration was requested on an instance above the cap.
class EnumerationCapError : public Error {
 public:
  using Error::Error;
};

// A click landed on a document with zero logging propensity.
class SupportViolationError : public Error {
 public:
  using Error::Error;
};

class DegenerateTrainingError : public Error {
 public:
  using Error::Error;
};

// The zero-credit constraint system of an interleaving plan has no
// feasible distribution.
class InfeasiblePlanError : public Error {
 public:
  using Error::Error;
};

}  // namespace ranklab
