#pragma once

#include <stdexcept>
#include <string>

namespace promptlab {

// Base for everything this library throws. The CLI maps ConfigError to exit
// code 1 and every other Error to exit code 2.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimMismatchError : Error {
  using Error::Error;
};

// Normalizing a vector whose norm is below the 1e-12 floor.
struct ZeroVectorError : Error {
  using Error::Error;
};

// A tape node carries an op tag outside the fixed vocabulary.
struct UnsupportedOpError : Error {
  using Error::Error;
};

struct PreconditionError : Error {
  using Error::Error;
};

// A probability that must be bounded away from zero fell to <= 1e-300.
struct DegenerateProbabilityError : Error {
  using Error::Error;
};

struct InvalidQError : Error {
  using Error::Error;
};

struct TemperatureError : Error {
  using Error::Error;
};

// Method/context combinations that make no sense, e.g. a trainable prompt of
// zero length.
struct InvalidCombinationError : Error {
  using Error::Error;
};

struct NoNoisySamplesError : Error {
  using Error::Error;
};

struct NoCleanSamplesError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct UnknownKeyError : ConfigError {
  using ConfigError::ConfigError;
};

struct InvalidValueError : ConfigError {
  using ConfigError::ConfigError;
};

struct ConfigSyntaxError : ConfigError {
  using ConfigError::ConfigError;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace promptlab
