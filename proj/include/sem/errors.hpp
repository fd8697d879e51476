#pragma once

#include <stdexcept>
#include <string>

namespace sem {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Matrix/feature operands whose dimensions do not agree.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

// Feature maps whose scales are not the ones an operation expects.
class ScaleMismatch : public Error {
 public:
  using Error::Error;
};

// Image dimensions incompatible with the extractor stride stack.
class BadDimensions : public Error {
 public:
  using Error::Error;
};

// Attention mask row with no attendable entry.
class EmptyRow : public Error {
 public:
  using Error::Error;
};

// Named parameter tensor missing or with the wrong shape.
class ParamShapeMismatch : public Error {
 public:
  using Error::Error;
};

// Fewer correspondences than the minimal pose solver needs.
class InsufficientMatches : public Error {
 public:
  using Error::Error;
};

// No essential-matrix decomposition passed the cheirality test.
class DegenerateConfiguration : public Error {
 public:
  using Error::Error;
};

class EmptyGroundTruth : public Error {
 public:
  using Error::Error;
};

// Scene generation could not satisfy co-visibility within bounded retries.
class InfeasibleSpec : public Error {
 public:
  using Error::Error;
};

// File could not be opened/read/written.
class IoError : public Error {
 public:
  using Error::Error;
};

// File contents malformed.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace sem
