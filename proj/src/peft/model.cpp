#include "plotadapter/peft/model.hpp"

#include <stdexcept>

namespace pa::peft {

Strategy::Strategy(const StrategySpec& spec, const vit::BackboneConfig& config, DType dtype, std::uint64_t seed)
    : spec_(spec), depth_(config.depth) {
  spec_.validate(config);
  Rng rng(seed);
  switch (spec_.kind) {
    case Kind::full:
    case Kind::linear: break;
    case Kind::vpt:
      prompts_ = std::make_unique<PromptBank>(store_, config.depth, spec_.dim, config.width, config.patch_size, rng,
                                              dtype);
      break;
    case Kind::vanilla_adapter:
    case Kind::plot_adapter_v1:
      for (std::size_t l = 0; l < config.depth; ++l) {
        const std::string p = "adapter." + std::to_string(l) + ".";
        projections_.push_back(VanillaAdapterLayer::create(store_, p, config.width, spec_, rng, dtype));
        if (spec_.kind == Kind::plot_adapter_v1)
          blocks_.push_back(std::make_unique<CnnBlock>(store_, p + "block.", spec_, rng, dtype));
      }
      break;
    case Kind::plot_adapter_v2:
      shared_ = std::make_unique<SharedProjectionBank>(store_, config.width, config.depth, spec_, rng, dtype);
      for (std::size_t l = 0; l < config.depth; ++l)
        blocks_.push_back(
            std::make_unique<CnnBlock>(store_, "adapter." + std::to_string(l) + ".block.", spec_, rng, dtype));
      break;
  }
}

void Strategy::set_influence(double s) {
  if (!(s >= 0.0)) throw std::invalid_argument("influence must be non-negative");
  spec_.influence = s;
}

TokenBatch Strategy::before_layer(Tape& tape, TokenBatch x, std::size_t layer) const {
  return prompts_ ? prompts_->inject(tape, std::move(x), layer) : x;
}

std::optional<Var> Strategy::adapter(Tape& tape, Var x_norm, const TokenBatch& x, std::size_t layer) const {
  if (layer >= depth_) throw std::out_of_range("adapter layer " + std::to_string(layer));
  switch (spec_.kind) {
    case Kind::vanilla_adapter: return projections_[layer].forward(tape, x_norm);
    case Kind::plot_adapter_v1: {
      const auto& proj = projections_[layer];
      return proj.up(tape, blocks_[layer]->forward_tokens(tape, proj.down(tape, x_norm), x));
    }
    case Kind::plot_adapter_v2:
      return shared_->up(tape, blocks_[layer]->forward_tokens(tape, shared_->down(tape, x_norm, layer), x), layer);
    default: return std::nullopt;
  }
}

// ---------------------------------------------------------------------------

AdaptedModel::AdaptedModel(const vit::Backbone& backbone, const StrategySpec& spec, std::size_t num_classes,
                           std::uint64_t seed)
    : backbone_(backbone),
      strategy_(spec, backbone.config(), backbone.dtype(), seed),
      head_(backbone.config().width, num_classes, backbone.dtype()) {
  apply_partition();
}

Var AdaptedModel::forward(Tape& tape, const Tensor& image) const {
  return vit::backbone_forward(tape, backbone_, image, head_, &strategy_);
}

num::ParamList AdaptedModel::all_parameters() const {
  num::ParamList all = backbone_.parameters();
  all.extend(strategy_.parameters());
  all.extend(head_.parameters());
  return all;
}

num::ParamList AdaptedModel::bundle_parameters() const {
  num::ParamList out = strategy_.parameters();
  out.extend(head_.parameters());
  return out;
}

Partition AdaptedModel::partition() const {
  Partition p;
  if (spec().kind == Kind::full) {
    p.trainable.extend(backbone_.parameters());
  } else {
    p.frozen.extend(backbone_.parameters());
  }
  p.trainable.extend(bundle_parameters());
  return p;
}

void AdaptedModel::apply_partition() const {
  const auto p = partition();
  for (auto* x : p.frozen) x->set_trainable(false);
  for (auto* x : p.trainable) x->set_trainable(true);
}

Partition partition_parameters(const AdaptedModel& model) { return model.partition(); }

// ---------------------------------------------------------------------------

vit::Container bundle_to_container(const AdaptedModel& model, const BundleInfo& info) {
  if (model.spec().kind == Kind::full)
    throw std::invalid_argument("full tuning changes the backbone; save a backbone checkpoint instead of a bundle");
  vit::Container c;
  c.meta["kind"] = "adapter";
  c.meta["strategy"] = model.spec();
  c.meta["num_classes"] = model.head().num_classes();
  c.meta["dtype"] = num::dtype_name(model.backbone().dtype());
  c.meta["backbone_hash"] = model.backbone().content_hash();
  c.meta["backbone_config"] = model.backbone().config();
  c.meta["catalog"] = info.catalog;
  c.meta["domain"] = info.domain;
  c.meta["extra"] = info.extra.is_null() ? nlohmann::json::object() : info.extra;
  for (const auto* p : model.bundle_parameters()) c.records.push_back({p->name, p->value});
  return c;
}

BundleInfo bundle_info(const vit::Container& container) {
  if (container.meta.value("kind", "") != "adapter") throw vit::FormatError("container is not an adapter bundle");
  BundleInfo info;
  info.catalog = container.meta.value("catalog", "");
  info.domain = container.meta.value("domain", "");
  info.extra = container.meta.value("extra", nlohmann::json::object());
  return info;
}

std::unique_ptr<AdaptedModel> model_from_bundle(const vit::Container& container, const vit::Backbone& backbone,
                                                BundleInfo* info) {
  const BundleInfo parsed = bundle_info(container);
  const auto& meta = container.meta;
  const std::string expected = meta.value("backbone_hash", "");
  const std::string actual = backbone.content_hash();
  if (expected != actual) {
    throw BackboneMismatchError("bundle was trained on backbone " + expected.substr(0, 12) + ", got " +
                                actual.substr(0, 12));
  }
  StrategySpec spec;
  std::size_t classes = 0;
  try {
    spec = meta.at("strategy").get<StrategySpec>();
    classes = meta.at("num_classes").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw vit::FormatError(std::string("bundle metadata incomplete: ") + e.what());
  }
  auto model = std::make_unique<AdaptedModel>(backbone, spec, classes, 0);
  vit::assign_parameters(model->bundle_parameters(), container.records, true);
  if (info) *info = parsed;
  return model;
}

void save_bundle(const AdaptedModel& model, const BundleInfo& info, const std::filesystem::path& path) {
  vit::write_bytes(path, vit::encode_container(bundle_to_container(model, info)));
}

std::unique_ptr<AdaptedModel> load_bundle(const std::filesystem::path& path, const vit::Backbone& backbone,
                                          BundleInfo* info) {
  return model_from_bundle(vit::decode_container(vit::read_bytes(path)), backbone, info);
}

}  // namespace pa::peft
