#pragma once

#include <stdexcept>
#include <string>

namespace xprobe {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition on an argument was violated (range, size, capacity).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// The classifier (or its transport) failed or returned an invalid value.
class OracleError : public Error {
 public:
  using Error::Error;
};

// Calibration with top-1 average <= baseline average; normalization undefined.
class DegenerateCalibration : public Error {
 public:
  using Error::Error;
};

// Malformed input file or record.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace xprobe
