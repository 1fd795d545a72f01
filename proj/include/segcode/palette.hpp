#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "segcode/image.hpp"
#include "segcode/manifest.hpp"

namespace segcode {

using Rgb = std::array<std::uint8_t, 3>;

/// Category -> color -> priority mapping for color-coded masks. Annotations
/// are painted in ascending priority, so higher-priority entries overwrite
/// lower ones where instances overlap.
struct PaletteEntry {
  std::vector<std::string> categories;
  Rgb color{0, 0, 0};
  int priority = 0;
};

struct ColorPalette {
  std::vector<PaletteEntry> entries;
  Rgb background{0, 0, 0};

  /// Entry covering a category, or nullptr when the category is irrelevant.
  const PaletteEntry* find(const std::string& category) const;

  /// Throws ConfigError on duplicate categories or duplicate priorities.
  void validate() const;
};

/// The default coloring scheme: person white, screens red, drink vessels
/// blue, cell phone cyan, microwave/oven yellow, sink light blue, paper/book
/// magenta, keyboard green, black background. Priority = row order (later
/// rows paint over earlier ones). "paper" aliases the COCO "book" entry.
ColorPalette default_palette();

/// Palette override file:
///   { "entries": [{"categories": [...], "color": [r,g,b], "priority": n}...],
///     "background": [r,g,b] }
ColorPalette load_palette(const std::filesystem::path& path);
void save_palette(const std::filesystem::path& path, const ColorPalette& palette);

/// Rasterizes one frame's annotations into a color-coded mask frame.
/// Instances with score below `score_threshold` or with categories outside
/// the palette are skipped. Painting order: ascending entry priority, then
/// annotation list order (later wins), onto a background-colored canvas.
Frame render_mask_frame(const std::vector<InstanceAnnotation>& annotations,
                        const ColorPalette& palette, int height, int width, double score_threshold);

/// Renders the full mask stream of a clip (one mask frame per RGB frame,
/// written as PPM next to `out_dir`) and returns the mask frame paths
/// relative to `rel_base`.
std::vector<std::string> encode_mask_stream(const DatasetIndex& index, const ClipRecord& clip,
                                            const ColorPalette& palette, double score_threshold,
                                            const std::filesystem::path& out_dir,
                                            const std::filesystem::path& rel_base);

}  // namespace segcode
