#pragma once

#include <stdexcept>
#include <string>

namespace ltmx {

// Base for every error raised by the library. Commands map any Error to a
// nonzero exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration, mismatched label sets, missing fields.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input files, insufficient samples, empty datasets.
class DataError : public Error {
 public:
  using Error::Error;
};

// An operation was asked to handle a modality it cannot process, e.g.
// stochastic augmentation of tabular data.
class UnsupportedModalityError : public Error {
 public:
  using Error::Error;
};

// Shape or length mismatch between cooperating tensors.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A loss or gradient became NaN or infinite during optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace ltmx
