#pragma once

#include <cstddef>
#include <string>

#include <json.hpp>

namespace pa::vit {

/// Vision Transformer topology.
struct BackboneConfig {
  std::size_t image_size = 64;
  std::size_t patch_size = 8;
  std::size_t width = 64;  // D
  std::size_t depth = 4;   // L
  std::size_t heads = 4;
  std::size_t mlp_dim = 256;
  std::size_t num_classes = 13;  // m, size of the classifier head
  double ln_eps = 1e-6;

  /// ViT-B/16 at 224x224.
  static BackboneConfig vit_b16(std::size_t num_classes = 13);
  /// CPU-sized preset used for training tests: 64px, patch 8, D=64, L=4.
  static BackboneConfig desk(std::size_t num_classes = 13);
  static BackboneConfig preset(const std::string& name, std::size_t num_classes = 13);

  /// Throws std::invalid_argument when the topology is inconsistent.
  void validate() const;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t head_dim() const { return width / heads; }
  std::size_t patch_dim() const { return 3 * patch_size * patch_size; }

  bool operator==(const BackboneConfig&) const = default;
};

void to_json(nlohmann::json& j, const BackboneConfig& c);
void from_json(const nlohmann::json& j, BackboneConfig& c);

/// Parameter count of the backbone (patch embedding, CLS, positions, encoder
/// layers, final norm), optionally with an m-way affine head.
std::size_t declared_parameter_count(const BackboneConfig& config, bool include_head);

}  // namespace pa::vit
