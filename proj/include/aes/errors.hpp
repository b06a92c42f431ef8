#pragma once

#include <stdexcept>
#include <string>

namespace aes {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension/shape mismatch between tensors or sequences.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Bad parameter value (out-of-range probability, score, size, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

// Row-level input file problem; message carries the line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Kappa has no defined value (zero expected disagreement / p_e == 1).
class UndefinedKappaError : public Error {
 public:
  using Error::Error;
};

// Internal bookkeeping mismatch (e.g. trainable parameter without a gradient).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace aes
