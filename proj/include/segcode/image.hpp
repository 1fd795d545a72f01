#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "segcode/errors.hpp"

namespace segcode {

/// One H x W x 3 image of 8-bit samples, row-major, channel order R,G,B.
struct Frame {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // size = height * width * 3

  static Frame filled(int h, int w, std::uint8_t r, std::uint8_t g, std::uint8_t b);

  std::uint8_t* px(int y, int x) { return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const std::uint8_t* px(int y, int x) const {
    return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }

  bool operator==(const Frame&) const = default;
};

/// Parses a binary PPM ("P6", maxval 255). Header comments (#) are tolerated
/// between tokens. Throws FormatError with the byte offset of the problem.
Frame decode_ppm(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> encode_ppm(const Frame& f);

Frame read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Frame& f);

/// Bilinear resize to target x target (stretch to square, half-pixel-center
/// sampling, round half up). Deterministic across platforms.
Frame resize_frame(const Frame& f, int target);

}  // namespace segcode
