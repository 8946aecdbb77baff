#pragma once

#include <stdexcept>
#include <string>

namespace samnet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mismatched tensor geometry, channel counts or level counts.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Image too small for the configured backbone.
class SizeError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A metric evaluated on an empty support (no keypoints, empty mask).
class MetricError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace samnet
