#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace dshift {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Unsupported or undecodable file format.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument value (non-positive sizes, empty sets, bad ranges).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Precondition on inputs violated (shape or channel mismatch).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

/// Raised by registered names that have no built-in implementation.
class ExtensionPointError : public Error {
 public:
  using Error::Error;
};

class UnknownAlgorithmError : public Error {
 public:
  using Error::Error;
};

class UnsupportedDirectionError : public Error {
 public:
  using Error::Error;
};

/// Corrupt or truncated checkpoint.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint is intact but belongs to another algorithm or architecture.
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

/// An optimisation produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::int64_t step, int scale = -1)
      : Error(what), step_(step), scale_(scale) {}

  std::int64_t step() const noexcept { return step_; }
  /// Scale index for multi-scale optimisers, -1 otherwise.
  int scale() const noexcept { return scale_; }

 private:
  std::int64_t step_;
  int scale_;
};

/// Wraps a failure inside a multi-stage workflow with the stage it happened in.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what) : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace dshift
