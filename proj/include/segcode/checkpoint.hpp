#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "segcode/errors.hpp"
#include "segcode/model.hpp"
#include "segcode/tensor.hpp"

namespace segcode {

// Checkpoint file layout (format_version 1):
//   { "format_version": 1,
//     "config": { ... model config ... },
//     "tensors": { name: { "shape": [...], "data": [...] } } }
// Values are written as JSON numbers; float -> double widening is exact and
// the serializer emits shortest round-trip decimals, so save/load is
// bit-exact.

template <typename S>
nlohmann::json checkpoint_json(const TwoStreamParams<S>& params) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["config"] = params.config.to_json();
  nlohmann::json tensors;
  for (const auto& [name, t] : params.named()) {
    nlohmann::json jt;
    jt["shape"] = t.shape();
    jt["data"] = t.values();
    tensors[name] = std::move(jt);
  }
  j["tensors"] = std::move(tensors);
  return j;
}

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const TwoStreamParams<S>& params) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("checkpoint: cannot write " + path.string());
  out << checkpoint_json(params).dump(1) << '\n';
}

template <typename S>
TwoStreamParams<S> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("checkpoint: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint: " + path.string() + ": " + e.what());
  }
  if (j.value("format_version", 0) != 1)
    throw FormatError("checkpoint: unsupported format_version in " + path.string());
  const ModelConfig config = ModelConfig::from_json(j.at("config"));
  TwoStreamParams<S> params = TwoStreamParams<S>::init(config, 0);
  const auto& tensors = j.at("tensors");
  for (auto& [name, t] : params.named()) {
    if (!tensors.contains(name)) throw FormatError("checkpoint: missing tensor \"" + name + "\"");
    const auto& jt = tensors.at(name);
    const Shape shape = jt.at("shape").get<Shape>();
    if (shape != t.shape())
      throw FormatError("checkpoint: tensor \"" + name + "\" has shape " + shape_str(shape) +
                        ", expected " + shape_str(t.shape()));
    auto data = jt.at("data").get<std::vector<S>>();
    if (data.size() != t.values().size())
      throw FormatError("checkpoint: tensor \"" + name + "\" data length does not match its shape");
    t.values() = std::move(data);
  }
  if (tensors.size() != params.named().size())
    throw FormatError("checkpoint: unexpected extra tensors in " + path.string());
  return params;
}

/// Tensor names present in a checkpoint file, without loading values.
std::vector<std::string> checkpoint_tensor_names(const std::filesystem::path& path);

}  // namespace segcode
