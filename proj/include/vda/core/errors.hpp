#pragma once

#include <stdexcept>
#include <string>

namespace vda {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Tensor/operand shape mismatch.
struct ShapeError : Error {
  using Error::Error;
};

/// Invalid or inconsistent configuration (maps to CLI exit code 2).
struct ConfigError : Error {
  using Error::Error;
};

/// Input degenerate for the requested operation (e.g. constant volume).
struct DegenerateInput : Error {
  using Error::Error;
};

/// Label image contains a value outside the expected class set.
struct InvalidLabel : Error {
  using Error::Error;
};

/// A training step produced a non-finite loss and rollback was exhausted.
struct TrainingDiverged : Error {
  using Error::Error;
};

/// Operation requires a trained state that is not loaded.
struct NotReady : Error {
  using Error::Error;
};

/// Aggregation over an empty report set.
struct EmptyReport : Error {
  using Error::Error;
};

/// Filesystem / serialization failure.
struct IoError : Error {
  using Error::Error;
};

}  // namespace vda
