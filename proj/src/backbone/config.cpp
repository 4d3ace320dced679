#include "plotadapter/backbone/config.hpp"

#include <stdexcept>

namespace pa::vit {

BackboneConfig BackboneConfig::vit_b16(std::size_t num_classes) {
  BackboneConfig c;
  c.image_size = 224;
  c.patch_size = 16;
  c.width = 768;
  c.depth = 12;
  c.heads = 12;
  c.mlp_dim = 3072;
  c.num_classes = num_classes;
  return c;
}

BackboneConfig BackboneConfig::desk(std::size_t num_classes) {
  BackboneConfig c;
  c.num_classes = num_classes;
  return c;
}

BackboneConfig BackboneConfig::preset(const std::string& name, std::size_t num_classes) {
  if (name == "desk") return desk(num_classes);
  if (name == "vit-b16" || name == "vit_b16") return vit_b16(num_classes);
  throw std::invalid_argument("unknown backbone preset: " + name);
}

void BackboneConfig::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0)
    throw std::invalid_argument("image_size must be a positive multiple of patch_size");
  if (heads == 0 || width == 0 || width % heads != 0) throw std::invalid_argument("width must be divisible by heads");
  if (depth < 1) throw std::invalid_argument("depth must be at least 1");
  if (mlp_dim == 0) throw std::invalid_argument("mlp_dim must be positive");
  if (num_classes == 0) throw std::invalid_argument("num_classes must be positive");
  if (!(ln_eps > 0)) throw std::invalid_argument("ln_eps must be positive");
}

void to_json(nlohmann::json& j, const BackboneConfig& c) {
  j = nlohmann::json{{"image_size", c.image_size}, {"patch_size", c.patch_size}, {"width", c.width},
                     {"depth", c.depth},           {"heads", c.heads},           {"mlp_dim", c.mlp_dim},
                     {"num_classes", c.num_classes}, {"ln_eps", c.ln_eps}};
}

void from_json(const nlohmann::json& j, BackboneConfig& c) {
  j.at("image_size").get_to(c.image_size);
  j.at("patch_size").get_to(c.patch_size);
  j.at("width").get_to(c.width);
  j.at("depth").get_to(c.depth);
  j.at("heads").get_to(c.heads);
  j.at("mlp_dim").get_to(c.mlp_dim);
  j.at("num_classes").get_to(c.num_classes);
  j.at("ln_eps").get_to(c.ln_eps);
}

std::size_t declared_parameter_count(const BackboneConfig& c, bool include_head) {
  const std::size_t d = c.width;
  const std::size_t embed = c.patch_dim() * d + d + d + (c.num_patches() + 1) * d;
  const std::size_t attn = 2 * d + (d * 3 * d + 3 * d) + (d * d + d);
  const std::size_t mlp = 2 * d + (d * c.mlp_dim + c.mlp_dim) + (c.mlp_dim * d + d);
  std::size_t total = embed + c.depth * (attn + mlp) + 2 * d;
  if (include_head) total += d * c.num_classes + c.num_classes;
  return total;
}

}  // namespace pa::vit
