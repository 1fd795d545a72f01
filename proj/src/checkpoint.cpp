#include "segcode/checkpoint.hpp"

namespace segcode {

std::vector<std::string> checkpoint_tensor_names(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("checkpoint: cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  std::vector<std::string> names;
  for (const auto& [name, jt] : j.at("tensors").items()) names.push_back(name);
  return names;
}

}  // namespace segcode
