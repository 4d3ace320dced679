#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "plotadapter/registry/optim.hpp"
#include "plotadapter/registry/record.hpp"
#include "plotadapter/synthplot/loader.hpp"
#include "plotadapter/task/metrics.hpp"
#include "plotadapter/task/recommend.hpp"

namespace pa::reg {

struct TrainConfig {
  peft::StrategySpec strategy = peft::StrategySpec::v2(16);
  std::string manifest;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double lr = 1e-5;
  double lr_floor = 0.0;
  AdamOptions adam;
  std::uint64_t seed = 0;
  num::DType precision = num::DType::f32;
  bool augment = true;
  /// Split whose mAP selects the stored epoch: "val" or "train".
  std::string monitor = "val";
  /// Store the best monitored epoch instead of the last one.
  bool keep_best = true;
  /// Also report train-split mAP every epoch.
  bool eval_train = false;
  /// Stop once the monitored mAP reaches this value; 0 disables.
  double target_map = 0.0;
  /// Run at most this many epochs of the schedule; 0 runs all of them.
  std::size_t stop_after = 0;
  /// Domain tag for the record; empty uses the manifest's generator domain.
  std::string domain;
  std::string id;

  /// Throws std::invalid_argument for non-positive sizes or rates.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Parses either a JSON object or "key = value" lines ('#' starts a comment).
/// Strategy keys (influence, se_reduction, token_mixer, ...) may appear at the
/// top level of the key=value form.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0;
  double train_loss = 0;
  std::optional<double> train_map;
  std::optional<double> val_map;

  nlohmann::json to_json() const;
  bool operator==(const EpochMetrics&) const = default;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  LoadedModel trained;
  std::vector<EpochMetrics> history;
  std::size_t best_epoch = 0;
  AdapterRecord record;
};

/// Optimizes the strategy's trainable set on the manifest's train split.
/// The base backbone is never modified; full tuning works on a copy.
/// Throws TrainingError on a non-finite loss.
TrainResult train(const TrainConfig& config, const vit::Backbone& backbone,
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

/// Forward pass of one preprocessed image, as logits.
std::vector<double> predict(const peft::AdaptedModel& model, const num::Tensor& image);

/// Un-augmented evaluation of one split. norm defaults to the manifest's.
task::EvalReport evaluate(const peft::AdaptedModel& model, const synth::Manifest& manifest, const std::string& split,
                          const std::optional<synth::Normalization>& norm = std::nullopt);

class CatalogMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Evaluates a stored record with its training normalization. Throws
/// CatalogMismatchError when record and manifest use different catalogs.
task::EvalReport evaluate(const AdapterRecord& record, const vit::Backbone& base, const synth::Manifest& manifest,
                          const std::string& split);

/// Normalization and input size a record was trained with.
synth::Normalization record_normalization(const peft::BundleInfo& info);

/// Reads a PNG, preprocesses it like training data and ranks the catalog.
std::vector<task::Recommendation> recommend_image(const LoadedModel& loaded, const std::filesystem::path& image,
                                                  const task::RecommendOptions& options);

}  // namespace pa::reg
