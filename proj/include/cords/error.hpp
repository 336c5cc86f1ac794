#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cords {

// Typed failure family. Everything the library throws derives from Error so
// the CLI boundary can map the whole family to a single domain exit code.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Precondition violated by the caller (bad shapes, non-finite input, ...).
struct InvalidArgument : Error {
  using Error::Error;
};

// Operation has no defined result for the requested configuration
// (e.g. closed-form overlap of a non-Gaussian family).
struct UnsupportedOperation : Error {
  using Error::Error;
};

// Importance sampling asked to draw from an empty object set.
struct EmptyProposal : Error {
  using Error::Error;
};

// Fewer samples than the operation needs (e.g. M < K in a GMM fit).
struct InsufficientPoints : Error {
  using Error::Error;
};

// Field-level data violates an invariant (negative density, bad weights).
struct InvalidField : Error {
  using Error::Error;
};

// Optimizer hit NaN/Inf it could not step around; carries the last finite
// iterate so callers can inspect where it died.
struct OptimizationDiverged : Error {
  std::vector<double> last_iterate;
  OptimizationDiverged(const std::string& what, std::vector<double> iterate)
      : Error(what), last_iterate(std::move(iterate)) {}
};

// Serialization failure; `where` is a JSON pointer or file:line location.
struct ParseError : Error {
  std::string where;
  ParseError(const std::string& what, std::string location)
      : Error(what + " (at " + location + ")"), where(std::move(location)) {}
};

}  // namespace cords
