#include "segcode/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace segcode {

Frame Frame::filled(int h, int w, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  Frame f;
  f.height = h;
  f.width = w;
  f.pixels.resize(static_cast<std::size_t>(h) * w * 3);
  for (std::size_t i = 0; i < f.pixels.size(); i += 3) {
    f.pixels[i] = r;
    f.pixels[i + 1] = g;
    f.pixels[i + 2] = b;
  }
  return f;
}

namespace {

[[noreturn]] void fail(const char* what, std::size_t offset) {
  throw FormatError(std::string("ppm: ") + what + " at byte " + std::to_string(offset));
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(const std::vector<std::uint8_t>& b, std::size_t& pos) {
  while (pos < b.size()) {
    const char c = static_cast<char>(b[pos]);
    if (c == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= b.size()) fail("truncated header", pos);
  std::string tok;
  while (pos < b.size()) {
    const char c = static_cast<char>(b[pos]);
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '#') break;
    tok.push_back(c);
    ++pos;
  }
  return tok;
}

int parse_int(const std::string& tok, std::size_t offset) {
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
    fail("expected unsigned integer", offset);
  long v = std::stol(tok);
  if (v <= 0 || v > 1 << 20) fail("dimension out of range", offset);
  return static_cast<int>(v);
}

}  // namespace

Frame decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos);
  if (magic != "P6") fail("wrong magic, expected P6", 0);
  std::size_t at = pos;
  const int w = parse_int(next_token(bytes, pos), at);
  at = pos;
  const int h = parse_int(next_token(bytes, pos), at);
  at = pos;
  const std::string maxval = next_token(bytes, pos);
  if (maxval != "255") fail("maxval must be 255", at);
  // exactly one whitespace byte separates the header from the payload
  if (pos >= bytes.size()) fail("truncated before payload", pos);
  const char sep = static_cast<char>(bytes[pos]);
  if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n') fail("missing payload separator", pos);
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() - pos < need) fail("truncated payload", bytes.size());
  Frame f;
  f.width = w;
  f.height = h;
  f.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                  bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return f;
}

std::vector<std::uint8_t> encode_ppm(const Frame& f) {
  std::string header = "P6\n" + std::to_string(f.width) + " " + std::to_string(f.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), f.pixels.begin(), f.pixels.end());
  return out;
}

Frame read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("ppm: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_ppm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(std::string(e.what()) + " in " + path.string());
  }
}

void write_ppm(const std::filesystem::path& path, const Frame& f) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("ppm: cannot write " + path.string());
  const auto bytes = encode_ppm(f);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Frame resize_frame(const Frame& f, int target) {
  if (target < 1) throw FormatError("resize_frame: target must be >= 1");
  Frame out;
  out.height = target;
  out.width = target;
  out.pixels.resize(static_cast<std::size_t>(target) * target * 3);
  const double sy = static_cast<double>(f.height) / target;
  const double sx = static_cast<double>(f.width) / target;
  for (int y = 0; y < target; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const double fy0 = std::floor(fy);
    const double wy = fy - fy0;
    // clamp the two taps independently so borders replicate the edge row
    const int y0 = std::clamp(static_cast<int>(fy0), 0, f.height - 1);
    const int y1 = std::clamp(static_cast<int>(fy0) + 1, 0, f.height - 1);
    for (int x = 0; x < target; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const double fx0 = std::floor(fx);
      const double wx = fx - fx0;
      const int x0 = std::clamp(static_cast<int>(fx0), 0, f.width - 1);
      const int x1 = std::clamp(static_cast<int>(fx0) + 1, 0, f.width - 1);
      for (int c = 0; c < 3; ++c) {
        const double v00 = f.px(y0, x0)[c], v01 = f.px(y0, x1)[c];
        const double v10 = f.px(y1, x0)[c], v11 = f.px(y1, x1)[c];
        const double v = (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
        // round half up, then clamp to 8 bits
        const double r = std::floor(v + 0.5);
        out.px(y, x)[c] = static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
      }
    }
  }
  return out;
}

}  // namespace segcode
