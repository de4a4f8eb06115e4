#pragma once

#include <stdexcept>
#include <string>

namespace topicssl {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class SizeLimitError : public Error {
 public:
  using Error::Error;
};

// Raised when a matrix is numerically rank deficient.
class RankError : public Error {
 public:
  RankError(const std::string& what, double smallest_singular_value)
      : Error(what), smallest_singular_value_(smallest_singular_value) {}
  double smallest_singular_value() const { return smallest_singular_value_; }

 private:
  double smallest_singular_value_;
};

class ConditioningError : public Error {
 public:
  using Error::Error;
};

class NotPositiveSemidefiniteError : public Error {
 public:
  using Error::Error;
};

class DegenerateLikelihoodError : public Error {
 public:
  using Error::Error;
};

class DegenerateLandmarkError : public Error {
 public:
  using Error::Error;
};

class DocumentTooShortError : public Error {
 public:
  using Error::Error;
};

class ModelCorruptError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace topicssl
