#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dali {

// Base of every error this library throws on purpose. Each subclass maps to
// one CLI exit code; messages are single-line and machine-parsable.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Argument outside its documented domain (negative lambda, zero kernel count, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Input data that makes the requested statistic undefined (all-identical samples, ...).
class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

// Transport marginals that cannot be coupled (mass mismatch beyond tolerance).
class MarginalError : public Error {
 public:
  using Error::Error;
};

// Iterative solver failed to converge; carries the iteration count.
class SolverError : public Error {
 public:
  SolverError(const std::string& message, std::size_t iterations)
      : Error(message + " after " + std::to_string(iterations) + " iterations"),
        iterations_(iterations) {}
  std::size_t iterations() const noexcept { return iterations_; }

 private:
  std::size_t iterations_;
};

// Caller violated an API contract (non-scalar objective, bad probability vector, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Batch too small for the requested objective.
class BatchError : public Error {
 public:
  using Error::Error;
};

// Training diverged; carries the epoch and batch where the loss left the reals.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& message, std::size_t epoch, std::size_t batch)
      : Error(message + " at epoch " + std::to_string(epoch) + " batch " +
              std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

// Filesystem-level failure (missing file, short read, unwritable directory).
class IoError : public Error {
 public:
  using Error::Error;
};

// Structurally invalid document or binary stream (bad magic, unknown keys, ...).
class SchemaError : public Error {
 public:
  using Error::Error;
};

}  // namespace dali
