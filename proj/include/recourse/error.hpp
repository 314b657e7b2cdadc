#pragma once

#include <stdexcept>
#include <string>

namespace recourse {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data: CSV cells, JSON documents, unknown categories.
/// `field` names the offending column or JSON path when one is known.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& message, std::string field = {})
      : Error(message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A caller broke an operation's precondition (width mismatch, too few samples, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A request is well-formed but asks for something the schema forbids,
/// e.g. changing an immutable feature.
class ConstraintError : public Error {
 public:
  explicit ConstraintError(const std::string& message, std::string field = {})
      : Error(message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Training diverged or the data cannot support the requested fit.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// A search direction needed by an explanation does not exist.
class DirectionError : public Error {
 public:
  using Error::Error;
};

/// Persisted artifacts do not match the hashes they were bound to.
class ArtifactMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace recourse
