#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "segcode/errors.hpp"
#include "segcode/rle.hpp"

namespace segcode {

/// One detected object instance in one frame of a clip.
struct InstanceAnnotation {
  int frame_index = 0;        // 0-based
  std::string category;       // COCO-style name
  double score = 0.0;         // detector confidence in [0, 1]
  int mask_height = 0;
  int mask_width = 0;
  std::vector<std::int64_t> rle_counts;
};

/// Manifest entry binding a clip's frames, optional annotations and optional
/// pre-rendered mask frames to a label. Paths are stored as written in the
/// manifest and resolved against the manifest's directory.
struct ClipRecord {
  std::string clip_id;
  std::int64_t label = 0;
  double fps = 0.0;  // informational only
  std::vector<std::string> frame_paths;
  std::optional<std::string> annotation_path;
  std::vector<std::string> mask_frame_paths;  // empty until encode-masks runs
  std::string split = "train";                // train | val | test
};

struct DatasetIndex {
  std::filesystem::path root;  // directory of the manifest file
  std::vector<std::string> classes;
  std::vector<ClipRecord> clips;

  std::filesystem::path resolve(const std::string& rel) const { return root / rel; }
  std::int64_t num_classes() const { return static_cast<std::int64_t>(classes.size()); }
};

/// Loads and validates a manifest: class table ordered and duplicate-free,
/// clip ids unique, labels in range, every referenced file present.
DatasetIndex load_manifest(const std::filesystem::path& path);

void save_manifest(const std::filesystem::path& path, const DatasetIndex& index);

std::vector<InstanceAnnotation> load_annotations(const std::filesystem::path& path);
void save_annotations(const std::filesystem::path& path, const std::vector<InstanceAnnotation>& anns);

}  // namespace segcode
