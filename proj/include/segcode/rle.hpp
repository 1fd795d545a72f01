#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "segcode/errors.hpp"

namespace segcode {

/// Binary mask stored row-major: mask[y * width + x] in {0, 1}.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  std::uint8_t at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const BinaryMask&) const = default;
};

/// Decodes uncompressed COCO-convention RLE: counts of alternating
/// background/foreground runs (background first) over column-major pixel
/// order (pixel p sits at column p / h, row p % h). `who` names the instance
/// in error messages.
BinaryMask decode_rle(const std::vector<std::int64_t>& counts, int h, int w,
                      const std::string& who = "mask");

/// Re-encodes a mask into canonical counts (no internal zero runs; a leading
/// zero only when pixel 0 is foreground).
std::vector<std::int64_t> encode_rle(const BinaryMask& mask);

/// Number of foreground pixels = sum of odd-indexed counts.
std::int64_t rle_foreground(const std::vector<std::int64_t>& counts);

}  // namespace segcode
