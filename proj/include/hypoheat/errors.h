#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hypoheat {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed expression text. `offset()` is the byte offset of the failure.
class ParseError : public Error {
 public:
  ParseError(std::size_t offset, std::string expected, const std::string& what)
      : Error(what), offset_(offset), expected_(std::move(expected)) {}
  std::size_t offset() const { return offset_; }
  const std::string& expected() const { return expected_; }

 private:
  std::size_t offset_;
  std::string expected_;
};

/// Evaluation outside the domain of a node (log of non-positive, 1/0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

/// A required structural hypothesis failed. `condition()` is 'a' for the
/// parallelism condition, 'b' for the bracket-generating condition, 'k' for
/// the Kalman rank condition and 'c' for chart form.
class HypothesisError : public Error {
 public:
  HypothesisError(char condition, const std::string& what)
      : Error(what), condition_(condition) {}
  char condition() const { return condition_; }

 private:
  char condition_;
};

class OrderOverflowError : public Error {
 public:
  using Error::Error;
};

class QuadratureError : public Error {
 public:
  QuadratureError(double achieved, const std::string& what)
      : Error(what), achieved_(achieved) {}
  double achieved() const { return achieved_; }

 private:
  double achieved_;
};

/// Path blow-up or a non-finite state during time stepping.
class SimulationError : public Error {
 public:
  SimulationError(std::size_t index, const std::string& what)
      : Error(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

class StabilityError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace hypoheat
