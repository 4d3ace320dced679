#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "plotadapter/backbone/checkpoint.hpp"
#include "plotadapter/peft/modules.hpp"

namespace pa::peft {

/// Extra structures a fine-tuning strategy adds to a frozen backbone.
class Strategy : public vit::LayerHooks {
 public:
  Strategy(const StrategySpec& spec, const vit::BackboneConfig& config, DType dtype, std::uint64_t seed);

  const StrategySpec& spec() const { return spec_; }
  /// Adapter or prompt parameters (empty for full and linear).
  num::ParamList parameters() const { return store_.list(); }

  TokenBatch before_layer(Tape& tape, TokenBatch x, std::size_t layer) const override;
  std::optional<Var> adapter(Tape& tape, Var x_norm, const TokenBatch& x, std::size_t layer) const override;
  double influence() const override { return spec_.influence; }
  void set_influence(double s);

  const VanillaAdapterLayer& projection(std::size_t layer) const { return projections_.at(layer); }
  const CnnBlock& block(std::size_t layer) const { return *blocks_.at(layer); }
  const SharedProjectionBank* shared() const { return shared_.get(); }
  const PromptBank* prompts() const { return prompts_.get(); }

 private:
  StrategySpec spec_;
  std::size_t depth_;
  ParamStore store_;
  std::vector<VanillaAdapterLayer> projections_;
  std::vector<std::unique_ptr<CnnBlock>> blocks_;
  std::unique_ptr<SharedProjectionBank> shared_;
  std::unique_ptr<PromptBank> prompts_;
};

struct Partition {
  num::ParamList frozen;
  num::ParamList trainable;
};

/// A backbone (not owned) fitted with one strategy and one classifier head.
///
/// Several models may share a backbone; each only reads it unless the
/// strategy is full tuning.
class AdaptedModel {
 public:
  AdaptedModel(const vit::Backbone& backbone, const StrategySpec& spec, std::size_t num_classes, std::uint64_t seed);

  const vit::Backbone& backbone() const { return backbone_; }
  Strategy& strategy() { return strategy_; }
  const Strategy& strategy() const { return strategy_; }
  vit::ClassifierHead& head() { return head_; }
  const vit::ClassifierHead& head() const { return head_; }
  const StrategySpec& spec() const { return strategy_.spec(); }

  /// [1, m] logits.
  Var forward(Tape& tape, const Tensor& image) const;

  /// Backbone, strategy and head parameters.
  num::ParamList all_parameters() const;
  /// Strategy plus head: what an adapter bundle carries.
  num::ParamList bundle_parameters() const;
  Partition partition() const;
  /// Sets every trainable flag to match partition().
  void apply_partition() const;

 private:
  const vit::Backbone& backbone_;
  Strategy strategy_;
  vit::ClassifierHead head_;
};

Partition partition_parameters(const AdaptedModel& model);

// ---------------------------------------------------------------------------
// Adapter bundles: the checkpoint container holding only strategy and head
// tensors, bound to one backbone by its content hash.

class BackboneMismatchError : public vit::ConfigMismatchError {
 public:
  using vit::ConfigMismatchError::ConfigMismatchError;
};

struct BundleInfo {
  std::string catalog;
  std::string domain;
  nlohmann::json extra = nlohmann::json::object();
};

vit::Container bundle_to_container(const AdaptedModel& model, const BundleInfo& info);
/// Throws BackboneMismatchError if the bundle was trained on another backbone.
std::unique_ptr<AdaptedModel> model_from_bundle(const vit::Container& container, const vit::Backbone& backbone,
                                                BundleInfo* info = nullptr);
BundleInfo bundle_info(const vit::Container& container);

void save_bundle(const AdaptedModel& model, const BundleInfo& info, const std::filesystem::path& path);
std::unique_ptr<AdaptedModel> load_bundle(const std::filesystem::path& path, const vit::Backbone& backbone,
                                          BundleInfo* info = nullptr);

}  // namespace pa::peft
