#pragma once

#include <stdexcept>
#include <string>

namespace bsr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Image dimensions violate an operation's precondition.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A configuration or model parameter is out of its valid domain.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or breakdown inside an iterative method.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class UnsupportedPhaseError : public Error {
 public:
  using Error::Error;
};

}  // namespace bsr
