#pragma once

#include <stdexcept>
#include <string>

namespace maxid {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidParameters : Error {
  using Error::Error;
};

struct NonConvergence : Error {
  using Error::Error;
};

struct DimensionTooLarge : Error {
  using Error::Error;
};

struct NotPositiveSemidefinite : Error {
  using Error::Error;
};

struct NumericalDensityFailure : Error {
  using Error::Error;
};

struct SingularInformation : Error {
  using Error::Error;
};

struct DegenerateSeries : Error {
  using Error::Error;
};

struct OutOfSupport : Error {
  using Error::Error;
};

struct NonTermination : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

struct EmptyAfterFilter : Error {
  using Error::Error;
};

struct MissingSite : Error {
  using Error::Error;
};

}  // namespace maxid
