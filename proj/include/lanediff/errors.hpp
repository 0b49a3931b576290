#pragma once

#include <stdexcept>
#include <string>

namespace lanediff {

/// Invalid numeric parameter or argument combination.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Missing node id or similar lookup failure.
struct LookupError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// Malformed input file. The message carries line or field context.
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Input violates an operation's structural precondition.
struct PreconditionError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Synthetic scene generation could not satisfy its constraints.
struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lanediff
