#pragma once

#include <stdexcept>
#include <string>

namespace dmdlab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched vector/matrix dimensions or network layouts.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A configuration field failed validation. `field()` is the dotted key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// A training loop stopped itself (divergence, collapse, non-finite values).
class TrainingAborted : public Error {
 public:
  TrainingAborted(std::string phase, const std::string& message)
      : Error(phase + ": " + message), phase_(std::move(phase)) {}
  const std::string& phase() const { return phase_; }

 private:
  std::string phase_;
};

/// A checkpoint could not be read back. `section()` names the failing part.
class CheckpointError : public Error {
 public:
  CheckpointError(std::string section, const std::string& message)
      : Error("checkpoint section '" + section + "': " + message),
        section_(std::move(section)) {}
  const std::string& section() const { return section_; }

 private:
  std::string section_;
};

}  // namespace dmdlab
