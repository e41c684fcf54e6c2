#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace natadiff {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Base of every error raised by the library. Subclasses name the violated
// contract so callers (and the CLI exit-code mapping) can tell them apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class OrderingError : public Error {
 public:
  using Error::Error;
};

class SingularScheduleError : public Error {
 public:
  using Error::Error;
};

class ConditioningError : public Error {
 public:
  using Error::Error;
};

class UndefinedScoreError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class TrainingFailure : public Error {
 public:
  using Error::Error;
};

class DegenerateGradient : public Error {
 public:
  using Error::Error;
};

class UndefinedRate : public Error {
 public:
  using Error::Error;
};

// An invariant of a constructed object does not hold. `field` is the dotted
// name of the offending input, e.g. "world.weights".
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace natadiff
