#include "segcode/manifest.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace segcode {

using nlohmann::json;

namespace {

json read_json(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(std::string(what) + ": cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": " + path.string() + ": " + e.what());
  }
  return j;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

DatasetIndex load_manifest(const std::filesystem::path& path) {
  const json j = read_json(path, "manifest");
  DatasetIndex index;
  index.root = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  if (!j.contains("classes") || !j["classes"].is_array())
    throw FormatError("manifest: missing \"classes\" array in " + path.string());
  std::set<std::string> seen_class;
  for (const auto& c : j["classes"]) {
    std::string name = c.get<std::string>();
    if (!seen_class.insert(name).second)
      throw ConfigError("manifest: duplicate class name \"" + name + "\"");
    index.classes.push_back(std::move(name));
  }
  std::set<std::string> seen_clip;
  for (const auto& jc : j.value("clips", json::array())) {
    ClipRecord clip;
    clip.clip_id = jc.at("clip_id").get<std::string>();
    if (!seen_clip.insert(clip.clip_id).second)
      throw ConfigError("manifest: duplicate clip_id \"" + clip.clip_id + "\"");
    clip.label = jc.at("label").get<std::int64_t>();
    if (clip.label < 0 || clip.label >= index.num_classes())
      throw ConfigError("manifest: clip \"" + clip.clip_id + "\" label " + std::to_string(clip.label) +
                        " out of range [0, " + std::to_string(index.num_classes()) + ")");
    clip.fps = jc.value("fps", 0.0);
    for (const auto& p : jc.at("frames")) clip.frame_paths.push_back(p.get<std::string>());
    if (clip.frame_paths.empty())
      throw ConfigError("manifest: clip \"" + clip.clip_id + "\" has no frames");
    if (jc.contains("annotations") && !jc["annotations"].is_null())
      clip.annotation_path = jc["annotations"].get<std::string>();
    if (jc.contains("mask_frames"))
      for (const auto& p : jc["mask_frames"]) clip.mask_frame_paths.push_back(p.get<std::string>());
    clip.split = jc.value("split", "train");

    for (const auto& p : clip.frame_paths)
      if (!std::filesystem::exists(index.resolve(p)))
        throw ConfigError("manifest: clip \"" + clip.clip_id + "\" references missing frame " + p);
    for (const auto& p : clip.mask_frame_paths)
      if (!std::filesystem::exists(index.resolve(p)))
        throw ConfigError("manifest: clip \"" + clip.clip_id + "\" references missing mask frame " + p);
    if (clip.annotation_path && !std::filesystem::exists(index.resolve(*clip.annotation_path)))
      throw ConfigError("manifest: clip \"" + clip.clip_id + "\" references missing annotations " +
                        *clip.annotation_path);
    index.clips.push_back(std::move(clip));
  }
  return index;
}

void save_manifest(const std::filesystem::path& path, const DatasetIndex& index) {
  json j;
  j["classes"] = index.classes;
  json clips = json::array();
  for (const auto& c : index.clips) {
    json jc;
    jc["clip_id"] = c.clip_id;
    jc["label"] = c.label;
    jc["fps"] = c.fps;
    jc["frames"] = c.frame_paths;
    jc["annotations"] = c.annotation_path ? json(*c.annotation_path) : json(nullptr);
    if (!c.mask_frame_paths.empty()) jc["mask_frames"] = c.mask_frame_paths;
    jc["split"] = c.split;
    clips.push_back(std::move(jc));
  }
  j["clips"] = std::move(clips);
  write_json(path, j);
}

std::vector<InstanceAnnotation> load_annotations(const std::filesystem::path& path) {
  const json j = read_json(path, "annotations");
  if (!j.is_array()) throw FormatError("annotations: expected a flat array in " + path.string());
  std::vector<InstanceAnnotation> out;
  for (const auto& ja : j) {
    InstanceAnnotation a;
    a.frame_index = ja.at("frame_index").get<int>();
    a.category = ja.at("category").get<std::string>();
    a.score = ja.at("score").get<double>();
    const auto& size = ja.at("size");
    a.mask_height = size.at(0).get<int>();
    a.mask_width = size.at(1).get<int>();
    for (const auto& c : ja.at("counts")) a.rle_counts.push_back(c.get<std::int64_t>());
    std::int64_t total = 0;
    for (std::int64_t c : a.rle_counts) total += c;
    if (total != static_cast<std::int64_t>(a.mask_height) * a.mask_width)
      throw AnnotationError("annotations: counts sum " + std::to_string(total) + " != " +
                            std::to_string(a.mask_height) + "x" + std::to_string(a.mask_width) +
                            " for a \"" + a.category + "\" instance in " + path.string());
    out.push_back(std::move(a));
  }
  return out;
}

void save_annotations(const std::filesystem::path& path, const std::vector<InstanceAnnotation>& anns) {
  json j = json::array();
  for (const auto& a : anns) {
    json ja;
    ja["frame_index"] = a.frame_index;
    ja["category"] = a.category;
    ja["score"] = a.score;
    ja["size"] = {a.mask_height, a.mask_width};
    ja["counts"] = a.rle_counts;
    j.push_back(std::move(ja));
  }
  write_json(path, j);
}

}  // namespace segcode
