#pragma once

#include <stdexcept>
#include <string>

namespace segcode {

// Shape or extent disagreement between tensors / kernels / sequences.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed on-disk data (PPM header, JSON schema, truncated payload).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Inconsistent instance annotation (RLE sum mismatch, mask size mismatch).
struct AnnotationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad configuration: missing files, out-of-range values, duplicate ids.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace segcode
