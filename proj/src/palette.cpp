#include "segcode/palette.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "segcode/image.hpp"
#include "segcode/rle.hpp"

namespace segcode {

using nlohmann::json;

const PaletteEntry* ColorPalette::find(const std::string& category) const {
  for (const auto& e : entries)
    if (std::find(e.categories.begin(), e.categories.end(), category) != e.categories.end()) return &e;
  return nullptr;
}

void ColorPalette::validate() const {
  std::set<std::string> cats;
  std::set<int> prios;
  for (const auto& e : entries) {
    for (const auto& c : e.categories)
      if (!cats.insert(c).second) throw ConfigError("palette: category \"" + c + "\" appears twice");
    if (!prios.insert(e.priority).second)
      throw ConfigError("palette: duplicate priority " + std::to_string(e.priority));
  }
}

ColorPalette default_palette() {
  ColorPalette p;
  p.background = {0, 0, 0};
  p.entries = {
      {{"person"}, {255, 255, 255}, 1},
      {{"tv", "laptop", "monitor"}, {255, 0, 0}, 2},
      {{"bottle", "cup", "wine glass"}, {0, 0, 255}, 3},
      {{"cell phone"}, {0, 255, 255}, 4},
      {{"microwave", "oven"}, {255, 255, 0}, 5},
      {{"sink"}, {100, 150, 200}, 6},
      {{"paper", "book"}, {255, 0, 255}, 7},
      {{"keyboard"}, {0, 255, 0}, 8},
  };
  return p;
}

namespace {

Rgb parse_rgb(const json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("palette: color must be [r, g, b]");
  Rgb c;
  for (int i = 0; i < 3; ++i) {
    const int v = j.at(static_cast<std::size_t>(i)).get<int>();
    if (v < 0 || v > 255) throw FormatError("palette: color sample out of [0, 255]");
    c[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v);
  }
  return c;
}

}  // namespace

ColorPalette load_palette(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("palette: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("palette: " + path.string() + ": " + e.what());
  }
  ColorPalette p;
  if (j.contains("background")) p.background = parse_rgb(j["background"]);
  for (const auto& je : j.at("entries")) {
    PaletteEntry e;
    for (const auto& c : je.at("categories")) e.categories.push_back(c.get<std::string>());
    e.color = parse_rgb(je.at("color"));
    e.priority = je.at("priority").get<int>();
    p.entries.push_back(std::move(e));
  }
  p.validate();
  return p;
}

void save_palette(const std::filesystem::path& path, const ColorPalette& palette) {
  json j;
  j["background"] = {palette.background[0], palette.background[1], palette.background[2]};
  json entries = json::array();
  for (const auto& e : palette.entries) {
    json je;
    je["categories"] = e.categories;
    je["color"] = {e.color[0], e.color[1], e.color[2]};
    je["priority"] = e.priority;
    entries.push_back(std::move(je));
  }
  j["entries"] = std::move(entries);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("palette: cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Frame render_mask_frame(const std::vector<InstanceAnnotation>& annotations, const ColorPalette& palette,
                        int height, int width, double score_threshold) {
  Frame out = Frame::filled(height, width, palette.background[0], palette.background[1],
                            palette.background[2]);
  // stable sort by priority keeps annotation list order as the tie-break
  std::vector<std::pair<int, const InstanceAnnotation*>> order;
  for (const auto& a : annotations) {
    if (a.score < score_threshold) continue;
    const PaletteEntry* e = palette.find(a.category);
    if (!e) continue;
    order.emplace_back(e->priority, &a);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& l, const auto& r) { return l.first < r.first; });
  for (const auto& [prio, a] : order) {
    if (a->mask_height != height || a->mask_width != width)
      throw AnnotationError("mask: instance \"" + a->category + "\" mask " +
                            std::to_string(a->mask_height) + "x" + std::to_string(a->mask_width) +
                            " does not match frame " + std::to_string(height) + "x" +
                            std::to_string(width));
    const BinaryMask m = decode_rle(a->rle_counts, a->mask_height, a->mask_width, a->category);
    const Rgb color = palette.find(a->category)->color;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        if (m.at(y, x)) {
          auto* px = out.px(y, x);
          px[0] = color[0];
          px[1] = color[1];
          px[2] = color[2];
        }
  }
  return out;
}

std::vector<std::string> encode_mask_stream(const DatasetIndex& index, const ClipRecord& clip,
                                            const ColorPalette& palette, double score_threshold,
                                            const std::filesystem::path& out_dir,
                                            const std::filesystem::path& rel_base) {
  if (!clip.annotation_path)
    throw ConfigError("mask: clip \"" + clip.clip_id + "\" has no annotation file");
  const auto annotations = load_annotations(index.resolve(*clip.annotation_path));
  std::filesystem::create_directories(out_dir);

  // bucket annotations per frame, preserving file order within a frame
  std::vector<std::vector<InstanceAnnotation>> per_frame(clip.frame_paths.size());
  for (const auto& a : annotations) {
    if (a.frame_index < 0 || a.frame_index >= static_cast<int>(clip.frame_paths.size()))
      throw AnnotationError("mask: clip \"" + clip.clip_id + "\" annotation frame_index " +
                            std::to_string(a.frame_index) + " out of range");
    per_frame[static_cast<std::size_t>(a.frame_index)].push_back(a);
  }

  std::vector<std::string> rel_paths;
  for (std::size_t i = 0; i < clip.frame_paths.size(); ++i) {
    const Frame rgb = read_ppm(index.resolve(clip.frame_paths[i]));
    const Frame mask = render_mask_frame(per_frame[i], palette, rgb.height, rgb.width, score_threshold);
    char name[32];
    std::snprintf(name, sizeof(name), "mask_%04zu.ppm", i);
    const std::filesystem::path file = out_dir / name;
    write_ppm(file, mask);
    rel_paths.push_back(std::filesystem::relative(file, rel_base).generic_string());
  }
  return rel_paths;
}

}  // namespace segcode
