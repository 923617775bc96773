#pragma once

#include <stdexcept>
#include <string>

namespace maxsmooth {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violates a documented precondition (bad dimensions, bad arguments).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

// A Cholesky pivot was zero or negative.
class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

// The likelihood of a group has no finite maximiser (e.g. all-zero data).
class DegenerateLikelihood : public Error {
 public:
  using Error::Error;
};

class MaxIterations : public Error {
 public:
  using Error::Error;
};

class NonConcaveAtMode : public Error {
 public:
  using Error::Error;
};

class NonFiniteObjective : public Error {
 public:
  using Error::Error;
};

}  // namespace maxsmooth
