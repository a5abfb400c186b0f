#pragma once

#include <stdexcept>
#include <string>

namespace advrep {

/// Base class for every error raised by the library. The CLI maps the
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of two operands do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A class label, domain id or cluster id is outside its valid range.
class LabelError : public Error {
 public:
  using Error::Error;
};

/// A precondition on arguments was violated (bad config value, too-small batch, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// An upstream artifact needed by a pipeline stage does not exist.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss, gradient or parameter.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace advrep
