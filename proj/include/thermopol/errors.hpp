#pragma once

#include <stdexcept>
#include <string>

namespace thermopol {

/// Input outside the domain of a physical model (angles, refractive index, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// AoLP requested for a Stokes vector with no linear component.
class UndefinedAolp : public DomainError {
 public:
  UndefinedAolp() : DomainError("AoLP undefined: s1 = s2 = 0") {}
};

/// Inverse map has no solution for the requested value.
class NoSolution : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Surface normal (nearly) parallel to the viewing direction.
class DegenerateProjection : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Degenerate point configuration for registration.
class DegenerateConfiguration : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Zero level set absent from the sampled volume.
class EmptyLevelSet : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reverse pass reached a primitive without a derivative rule.
class UnsupportedPrimitive : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid or unreadable configuration / dataset. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File missing, unreadable, malformed or unwritable.
class IoError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// NaN loss, divergence and similar. Maps to CLI exit code 3.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace thermopol
