#pragma once

#include <stdexcept>
#include <string>

namespace nrroom {

// Base for all library errors. CLI maps ValidationError -> exit 1 and
// NumericalError -> exit 2.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
  using Error::Error;
};

struct NumericalError : Error {
  using Error::Error;
};

struct DegenerateGradient : NumericalError {
  DegenerateGradient() : NumericalError("sdf gradient norm underflow (medial-axis query)") {}
};

struct DegenerateRotation : ValidationError {
  DegenerateRotation() : ValidationError("6d rotation halves are zero or parallel") {}
};

struct NoAlbedo : ValidationError {
  NoAlbedo() : ValidationError("field carries no albedo") {}
};

struct EmptyField : ValidationError {
  EmptyField() : ValidationError("field has no negative voxel") {}
};

struct BadAspect : ValidationError {
  BadAspect() : ValidationError("equirectangular image must have width == 2 * height") {}
};

struct FormatError : ValidationError {
  using ValidationError::ValidationError;
};

struct NonFiniteLoss : NumericalError {
  explicit NonFiniteLoss(const std::string& diag)
      : NumericalError("non-finite loss: " + diag) {}
};

}  // namespace nrroom
