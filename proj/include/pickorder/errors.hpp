#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pickorder {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidTransformError : public Error {
 public:
  using Error::Error;
};

class DegenerateHullError : public Error {
 public:
  using Error::Error;
};

class MissingObjectError : public Error {
 public:
  explicit MissingObjectError(int id)
      : Error("object id " + std::to_string(id) + " is not in the scene"), id_(id) {}
  int id() const noexcept { return id_; }

 private:
  int id_;
};

class EmptySceneError : public Error {
 public:
  EmptySceneError() : Error("scene has no objects") {}
};

class GenerationError : public Error {
 public:
  GenerationError(const std::string& what, unsigned long long seed)
      : Error(what + " (seed " + std::to_string(seed) + ")"), seed_(seed) {}
  unsigned long long seed() const noexcept { return seed_; }

 private:
  unsigned long long seed_;
};

class MustSettleFirstError : public Error {
 public:
  MustSettleFirstError() : Error("scene is not settled; call settle() first") {}
};

/// Plackett-Luce fitting hit its iteration cap; carries the last iterate.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> last_iterate)
      : Error(what), last_iterate_(std::move(last_iterate)) {}
  const std::vector<double>& last_iterate() const noexcept { return last_iterate_; }

 private:
  std::vector<double> last_iterate_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class PlannerContractError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pickorder
