#include "segcode/rle.hpp"

namespace segcode {

BinaryMask decode_rle(const std::vector<std::int64_t>& counts, int h, int w, const std::string& who) {
  std::int64_t total = 0;
  for (std::int64_t c : counts) {
    if (c < 0) throw AnnotationError("rle: negative run count in " + who);
    total += c;
  }
  if (total != static_cast<std::int64_t>(h) * w)
    throw AnnotationError("rle: counts sum to " + std::to_string(total) + " but mask is " +
                          std::to_string(h) + "x" + std::to_string(w) + " in " + who);
  BinaryMask m;
  m.height = h;
  m.width = w;
  m.bits.assign(static_cast<std::size_t>(h) * w, 0);
  std::int64_t p = 0;
  std::uint8_t v = 0;  // runs start with background
  for (std::int64_t c : counts) {
    if (v) {
      for (std::int64_t i = 0; i < c; ++i) {
        const std::int64_t q = p + i;
        m.bits[static_cast<std::size_t>((q % h) * w + q / h)] = 1;  // column-major pixel order
      }
    }
    p += c;
    v = !v;
  }
  return m;
}

std::vector<std::int64_t> encode_rle(const BinaryMask& mask) {
  const std::int64_t n = static_cast<std::int64_t>(mask.height) * mask.width;
  std::vector<std::int64_t> counts;
  std::uint8_t v = 0;
  std::int64_t run = 0;
  for (std::int64_t p = 0; p < n; ++p) {
    const std::uint8_t bit = mask.bits[static_cast<std::size_t>((p % mask.height) * mask.width + p / mask.height)];
    if (bit != v) {
      counts.push_back(run);
      run = 0;
      v = bit;
    }
    ++run;
  }
  counts.push_back(run);
  return counts;
}

std::int64_t rle_foreground(const std::vector<std::int64_t>& counts) {
  std::int64_t fg = 0;
  for (std::size_t i = 1; i < counts.size(); i += 2) fg += counts[i];
  return fg;
}

}  // namespace segcode
