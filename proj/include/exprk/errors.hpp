#pragma once

#include <stdexcept>
#include <string>

namespace exprk {

// Common base so callers can catch everything thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shapes do not line up (matrix sizes, vector lengths, stage counts).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Input values are unusable: NaN/Inf entries, zero seed vectors, empty data.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

// A scalar argument is outside its documented range (orders, counts, tolerances).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// A method/problem could not be assembled from the given nodes or settings.
class ConstructionError : public Error {
 public:
  using Error::Error;
};

// Name not present in a catalog.
class LookupError : public Error {
 public:
  using Error::Error;
};

// An operation was invoked on an object that does not support it.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Iteration gave up within its budget; carries a controller trace for diagnosis.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& msg, std::string trace)
      : Error(msg + "\n" + trace), trace_(std::move(trace)) {}
  const std::string& trace() const { return trace_; }

 private:
  std::string trace_;
};

// Non-finite values appeared during a computation that started from finite data.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace exprk
