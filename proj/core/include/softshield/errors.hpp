#pragma once

#include <stdexcept>

namespace softshield {

// One exception type per failure class so callers and tests can catch
// exactly the condition they care about.

struct DimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Violation of an API precondition (non-scalar backward, empty input, ...).
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RangeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Sequence does not fit the model context window.
struct LengthError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RegistryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Checkpoints that do not belong to the model they are used with.
struct CompatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace softshield
