#include "plotadapter/registry/record.hpp"

#include <stdexcept>

namespace pa::reg {

namespace {

constexpr const char* kFullKind = "full_model";

vit::Container full_container(const peft::AdaptedModel& model, const peft::BundleInfo& info,
                              const std::string& base_hash) {
  vit::Container c;
  c.meta["kind"] = kFullKind;
  c.meta["strategy"] = model.spec();
  c.meta["num_classes"] = model.head().num_classes();
  c.meta["dtype"] = num::dtype_name(model.backbone().dtype());
  c.meta["backbone_hash"] = base_hash;
  c.meta["backbone_config"] = model.backbone().config();
  c.meta["catalog"] = info.catalog;
  c.meta["domain"] = info.domain;
  c.meta["extra"] = info.extra.is_null() ? nlohmann::json::object() : info.extra;
  for (const auto* p : model.backbone().parameters()) c.records.push_back({p->name, p->value});
  for (const auto* p : model.bundle_parameters()) c.records.push_back({p->name, p->value});
  return c;
}

}  // namespace

std::unique_ptr<vit::Backbone> clone_backbone(const vit::Backbone& backbone) {
  return vit::backbone_from_container(vit::backbone_to_container(backbone));
}

AdapterRecord make_record(const peft::AdaptedModel& model, const peft::BundleInfo& info, const std::string& base_hash,
                          const std::string& id) {
  vit::Container c;
  if (model.spec().kind == peft::Kind::full) {
    c = full_container(model, info, base_hash);
  } else {
    if (model.backbone().content_hash() != base_hash)
      throw peft::BackboneMismatchError("adapter model does not sit on the stated base backbone");
    c = peft::bundle_to_container(model, info);
  }
  return record_from_payload(vit::encode_container(c), id);
}

AdapterRecord record_from_payload(std::vector<std::byte> payload, const std::string& id) {
  const auto c = vit::decode_container(payload);
  const std::string kind = c.meta.value("kind", "");
  if (kind != "adapter" && kind != kFullKind) throw vit::FormatError("container is not an adapter record");
  AdapterRecord r;
  r.id = id;
  try {
    r.catalog = c.meta.at("catalog").get<std::string>();
    r.domain = c.meta.at("domain").get<std::string>();
    r.strategy = c.meta.at("strategy").get<peft::StrategySpec>();
    r.backbone_hash = c.meta.at("backbone_hash").get<std::string>();
    r.training = c.meta.value("extra", nlohmann::json::object()).value("training", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw vit::FormatError(std::string("record metadata incomplete: ") + e.what());
  }
  r.payload = std::move(payload);
  return r;
}

LoadedModel instantiate(const AdapterRecord& record, const vit::Backbone& base) {
  const auto c = vit::decode_container(record.payload);
  LoadedModel out;
  if (c.meta.value("kind", "") != kFullKind) {
    out.model = peft::model_from_bundle(c, base, &out.info);
    return out;
  }
  const std::string expected = c.meta.value("backbone_hash", "");
  if (expected != base.content_hash())
    throw peft::BackboneMismatchError("record was derived from backbone " + expected.substr(0, 12) + ", got " +
                                      base.content_hash().substr(0, 12));
  try {
    const auto config = c.meta.at("backbone_config").get<vit::BackboneConfig>();
    const auto dtype = c.meta.at("dtype").get<std::string>() == "f64" ? num::DType::f64 : num::DType::f32;
    out.owned_backbone = std::make_unique<vit::Backbone>(config, dtype, 0);
    const auto classes = c.meta.at("num_classes").get<std::size_t>();
    out.model = std::make_unique<peft::AdaptedModel>(*out.owned_backbone, c.meta.at("strategy").get<peft::StrategySpec>(),
                                                     classes, 0);
  } catch (const nlohmann::json::exception& e) {
    throw vit::FormatError(std::string("record metadata incomplete: ") + e.what());
  }
  vit::assign_parameters(out.model->all_parameters(), c.records, true);
  out.info = {c.meta.value("catalog", ""), c.meta.value("domain", ""), c.meta.value("extra", nlohmann::json::object())};
  return out;
}

}  // namespace pa::reg
