#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "plotadapter/peft/model.hpp"

namespace pa::reg {

/// A trained strategy plus head, serialized as one checkpoint container.
///
/// Adapter strategies store only their own tensors and the head. Full tuning
/// stores every backbone tensor as well; its record still names the base
/// backbone it started from.
struct AdapterRecord {
  std::string id;
  std::string catalog;
  std::string domain;
  peft::StrategySpec strategy;
  std::string backbone_hash;  // base backbone
  nlohmann::json training = nlohmann::json::object();
  std::vector<std::byte> payload;

  std::size_t size_bytes() const { return payload.size(); }
};

/// A model rebuilt from a record. Owns its backbone when the record was full tuning.
struct LoadedModel {
  std::unique_ptr<vit::Backbone> owned_backbone;
  std::unique_ptr<peft::AdaptedModel> model;
  peft::BundleInfo info;
};

/// base_hash is the hash of the backbone the model was derived from; for
/// adapter strategies it must equal the model's own backbone hash.
AdapterRecord make_record(const peft::AdaptedModel& model, const peft::BundleInfo& info, const std::string& base_hash,
                          const std::string& id = {});

/// Parses the payload. Throws vit::CheckpointError subclasses on damage.
AdapterRecord record_from_payload(std::vector<std::byte> payload, const std::string& id = {});

/// Throws peft::BackboneMismatchError unless base has the record's hash.
LoadedModel instantiate(const AdapterRecord& record, const vit::Backbone& base);

/// Deep copy through the checkpoint container.
std::unique_ptr<vit::Backbone> clone_backbone(const vit::Backbone& backbone);

}  // namespace pa::reg
