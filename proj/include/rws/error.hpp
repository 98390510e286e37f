#pragma once

#include <stdexcept>
#include <string>

namespace rws {

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Raised by any forward op whose output contains NaN or +-Inf.
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RecordError : std::logic_error {
  using std::logic_error::logic_error;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct GrammarError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rws
