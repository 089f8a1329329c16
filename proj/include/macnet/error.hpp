#pragma once

#include <stdexcept>
#include <string>

namespace macnet {

// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor extents disagree (inner dimensions, channel counts, ...).
class ShapeError : public Error {
 public:
  using Error::Error;
};

// An operation or layer was configured with invalid parameters
// (negative extents, dilation producing an empty output, p >= 1, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A documented precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Gradient machinery misuse: backward twice without reset, missing grads.
class GradientError : public Error {
 public:
  using Error::Error;
};

// A class label lies outside [0, num_classes).
class LabelError : public Error {
 public:
  using Error::Error;
};

// Operation requires the model to be in a different train/eval mode.
class ModeError : public Error {
 public:
  using Error::Error;
};

// A NaN or Inf appeared where only finite values are allowed.
class NumericFault : public Error {
 public:
  using Error::Error;
};

// Dataset manifest is structurally invalid (empty class, split straddling).
class ManifestError : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failure: missing file, unwritable directory.
class IoError : public Error {
 public:
  using Error::Error;
};

// A file exists but its contents do not parse (CSV, checkpoint, config).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Image file has a recognized magic but a corrupt or truncated body.
class MalformedImageError : public Error {
 public:
  using Error::Error;
};

// Image file is in a format this build does not decode.
class UnsupportedImageError : public Error {
 public:
  using Error::Error;
};

}  // namespace macnet
