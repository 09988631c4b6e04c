#pragma once

#include <stdexcept>
#include <string>

namespace antigan {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

class MissingSourceError : public Error {
 public:
  using Error::Error;
};

class UnknownDatasetError : public Error {
 public:
  using Error::Error;
};

class EmptyClassError : public Error {
 public:
  using Error::Error;
};

class ShapeMismatchError : public Error {
 public:
  using Error::Error;
};

// A training loss or metric became NaN/inf.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Raised when a component touches data its role forbids (e.g. real private
// records reaching the federated trainer in a defended run).
class ProvenanceError : public Error {
 public:
  using Error::Error;
};

}  // namespace antigan
