#include "plotadapter/registry/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "plotadapter/task/loss.hpp"

namespace pa::reg {

namespace {

const char* precision_name(num::DType d) { return num::dtype_name(d); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Keys of the key=value form that belong to the strategy spec.
const char* const kSpecKeys[] = {"influence", "se_reduction", "init_bound", "vanilla_activation"};
const char* const kBlockKeys[] = {"token_mixer", "attention", "channel_mixer", "literal_gate", "se_activation"};
const char* const kInitKeys[] = {"down_rescale", "down_bias", "up_rescale", "up_bias"};

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("epochs must be positive");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (!(lr > 0)) throw std::invalid_argument("lr must be positive");
  if (!(lr_floor >= 0 && lr_floor <= lr)) throw std::invalid_argument("lr_floor must be in [0, lr]");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1 && adam.eps > 0))
    throw std::invalid_argument("Adam betas must be in [0,1) and eps positive");
  if (monitor != "val" && monitor != "train") throw std::invalid_argument("monitor must be 'val' or 'train'");
  if (!(target_map >= 0 && target_map <= 1)) throw std::invalid_argument("target_map must be in [0, 1]");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"strategy", c.strategy},
       {"manifest", c.manifest},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"lr", c.lr},
       {"lr_floor", c.lr_floor},
       {"beta1", c.adam.beta1},
       {"beta2", c.adam.beta2},
       {"adam_eps", c.adam.eps},
       {"seed", c.seed},
       {"precision", precision_name(c.precision)},
       {"augment", c.augment},
       {"monitor", c.monitor},
       {"keep_best", c.keep_best},
       {"eval_train", c.eval_train},
       {"target_map", c.target_map},
       {"stop_after", c.stop_after},
       {"domain", c.domain},
       {"id", c.id}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  if (j.contains("strategy")) {
    const auto& s = j["strategy"];
    c.strategy = s.is_string() ? peft::StrategySpec::parse(s.get<std::string>()) : s.get<peft::StrategySpec>();
  }
  c.manifest = j.value("manifest", c.manifest);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.lr_floor = j.value("lr_floor", c.lr_floor);
  c.adam.beta1 = j.value("beta1", c.adam.beta1);
  c.adam.beta2 = j.value("beta2", c.adam.beta2);
  c.adam.eps = j.value("adam_eps", c.adam.eps);
  c.seed = j.value("seed", c.seed);
  if (j.contains("precision")) c.precision = num::parse_dtype(j["precision"].get<std::string>());
  c.augment = j.value("augment", c.augment);
  c.monitor = j.value("monitor", c.monitor);
  c.keep_best = j.value("keep_best", c.keep_best);
  c.eval_train = j.value("eval_train", c.eval_train);
  c.target_map = j.value("target_map", c.target_map);
  c.stop_after = j.value("stop_after", c.stop_after);
  c.domain = j.value("domain", c.domain);
  c.id = j.value("id", c.id);
}

TrainConfig parse_train_config(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  TrainConfig c;
  if (first != std::string::npos && text[first] == '{') {
    c = nlohmann::json::parse(text).get<TrainConfig>();
    c.validate();
    return c;
  }
  nlohmann::json top = nlohmann::json::object(), spec_extra = nlohmann::json::object();
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq)), raw = trim(line.substr(eq + 1));
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
      value = raw;
    }
    if (key == "strategy" || key == "manifest" || key == "domain" || key == "id" || key == "monitor" ||
        key == "precision")
      value = raw;
    auto in = [&](const auto& keys) {
      for (const char* k : keys)
        if (key == k) return true;
      return false;
    };
    if (in(kSpecKeys) || in(kBlockKeys) || in(kInitKeys)) {
      spec_extra[key] = value;
    } else {
      top[key] = value;
    }
  }
  c = top.get<TrainConfig>();
  if (!spec_extra.empty()) {
    nlohmann::json s = c.strategy;
    for (auto& [k, v] : spec_extra.items()) {
      const std::string key = k;
      if (std::find(std::begin(kBlockKeys), std::end(kBlockKeys), key) != std::end(kBlockKeys))
        s["block"][key] = v;
      else if (std::find(std::begin(kInitKeys), std::end(kInitKeys), key) != std::end(kInitKeys))
        s["shared_init"][key] = v;
      else
        s[key] = v;
    }
    c.strategy = s.get<peft::StrategySpec>();
  }
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

nlohmann::json EpochMetrics::to_json() const {
  nlohmann::json j = {{"epoch", epoch}, {"lr", lr}, {"train_loss", train_loss}};
  j["train_mAP"] = train_map ? nlohmann::json(*train_map) : nlohmann::json(nullptr);
  j["val_mAP"] = val_map ? nlohmann::json(*val_map) : nlohmann::json(nullptr);
  return j;
}

std::vector<double> predict(const peft::AdaptedModel& model, const num::Tensor& image) {
  num::Tape tape(model.backbone().dtype());
  return model.forward(tape, image).value().to_vector();
}

namespace {

task::EvalReport evaluate_loader(const peft::AdaptedModel& model, const synth::BatchLoader& loader,
                                 const task::ApiCatalog& catalog) {
  std::vector<std::vector<double>> scores;
  std::vector<task::LabelVector> labels;
  for (const auto& batch : loader.epoch(0))
    for (std::size_t k = 0; k < batch.size(); ++k) {
      scores.push_back(predict(model, batch.images[k]));
      labels.push_back(batch.labels[k]);
    }
  return task::mean_average_precision(scores, labels, catalog);
}

synth::LoaderOptions eval_options(const peft::AdaptedModel& model, const std::optional<synth::Normalization>& norm) {
  synth::LoaderOptions o;
  o.dtype = model.backbone().dtype();
  o.image_size = model.backbone().config().image_size;
  o.normalization = norm;
  return o;
}

std::vector<num::Tensor> snapshot(const num::ParamList& params) {
  std::vector<num::Tensor> out;
  for (const auto* p : params) out.push_back(p->value);
  return out;
}

void restore(const num::ParamList& params, const std::vector<num::Tensor>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = values[i];
}

}  // namespace

task::EvalReport evaluate(const peft::AdaptedModel& model, const synth::Manifest& manifest, const std::string& split,
                          const std::optional<synth::Normalization>& norm) {
  const auto& catalog = task::ApiCatalog::builtin(manifest.catalog);
  if (catalog.size() != model.head().num_classes())
    throw CatalogMismatchError("model has " + std::to_string(model.head().num_classes()) + " outputs, catalog " +
                               catalog.id() + " has " + std::to_string(catalog.size()));
  synth::BatchLoader loader(manifest, split, eval_options(model, norm));
  return evaluate_loader(model, loader, catalog);
}

synth::Normalization record_normalization(const peft::BundleInfo& info) {
  synth::Normalization n;
  if (info.extra.contains("normalization")) {
    n.mean = info.extra["normalization"].at("mean").get<std::array<double, 3>>();
    n.std = info.extra["normalization"].at("std").get<std::array<double, 3>>();
  }
  return n;
}

task::EvalReport evaluate(const AdapterRecord& record, const vit::Backbone& base, const synth::Manifest& manifest,
                          const std::string& split) {
  if (record.catalog != manifest.catalog)
    throw CatalogMismatchError("record targets catalog " + record.catalog + ", manifest uses " + manifest.catalog);
  auto loaded = instantiate(record, base);
  return evaluate(*loaded.model, manifest, split, record_normalization(loaded.info));
}

std::vector<task::Recommendation> recommend_image(const LoadedModel& loaded, const std::filesystem::path& image,
                                                  const task::RecommendOptions& options) {
  const auto& model = *loaded.model;
  const auto& catalog = task::ApiCatalog::builtin(loaded.info.catalog);
  const auto tensor = synth::preprocess(synth::read_png(image), model.backbone().config().image_size,
                                        record_normalization(loaded.info), model.backbone().dtype());
  return task::recommend(predict(model, tensor), catalog, options);
}

TrainResult train(const TrainConfig& config, const vit::Backbone& backbone,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  config.validate();
  if (backbone.dtype() != config.precision)
    throw std::invalid_argument(std::string("backbone precision is ") + num::dtype_name(backbone.dtype()) +
                                ", config asks for " + num::dtype_name(config.precision));
  const auto manifest = synth::read_manifest(config.manifest);
  const auto& catalog = task::ApiCatalog::builtin(manifest.catalog);
  config.strategy.validate(backbone.config());

  TrainResult result;
  const std::string base_hash = backbone.content_hash();
  const vit::Backbone* bb = &backbone;
  if (config.strategy.kind == peft::Kind::full) {
    result.trained.owned_backbone = clone_backbone(backbone);
    bb = result.trained.owned_backbone.get();
  }
  result.trained.model =
      std::make_unique<peft::AdaptedModel>(*bb, config.strategy, catalog.size(), num::Rng::derive(config.seed, 1));
  auto& model = *result.trained.model;
  const auto trainable = peft::partition_parameters(model).trainable;

  synth::LoaderOptions train_opt = eval_options(model, std::nullopt);
  train_opt.batch_size = config.batch_size;
  train_opt.augment = config.augment;
  train_opt.shuffle = true;
  train_opt.seed = num::Rng::derive(config.seed, 2);
  synth::BatchLoader train_loader(manifest, "train", train_opt);

  std::optional<synth::BatchLoader> train_eval, val_eval;
  if (config.eval_train || config.monitor == "train") train_eval.emplace(manifest, "train", eval_options(model, std::nullopt));
  if (!manifest.split_indices("val").empty()) {
    val_eval.emplace(manifest, "val", eval_options(model, std::nullopt));
  } else if (config.monitor == "val") {
    throw std::invalid_argument("manifest has no val samples; use monitor=train");
  }

  Adam adam(trainable, config.adam);
  std::vector<num::Tensor> best = snapshot(trainable);
  double best_map = -1;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = cosine_lr(config.lr, config.lr_floor, epoch, config.epochs);
    double loss_sum = 0;
    std::size_t seen = 0, batch_index = 0;
    for (const auto& batch : train_loader.epoch(epoch)) {
      adam.zero_grad();
      num::Tape tape(bb->dtype());
      double loss_value = 0;
      try {
        std::vector<num::Var> rows;
        for (const auto& img : batch.images) rows.push_back(model.forward(tape, img));
        auto loss = task::multilabel_soft_margin_loss(num::concat_rows(rows), batch.labels);
        loss_value = loss.value().item();
        if (!std::isfinite(loss_value)) throw num::NonFiniteError("loss is " + std::to_string(loss_value));
        tape.backward(loss);
      } catch (const num::NonFiniteError& e) {
        throw TrainingError("non-finite value at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index) + " (lr " + std::to_string(m.lr) + "): " + e.what());
      }
      adam.step(m.lr);
      loss_sum += loss_value * static_cast<double>(batch.size());
      seen += batch.size();
      ++batch_index;
    }
    m.train_loss = loss_sum / static_cast<double>(seen);
    if (train_eval) m.train_map = evaluate_loader(model, *train_eval, catalog).map;
    if (val_eval) m.val_map = evaluate_loader(model, *val_eval, catalog).map;
    const double monitored = *(config.monitor == "train" ? m.train_map : m.val_map);
    if (monitored > best_map) {
      best_map = monitored;
      result.best_epoch = epoch;
      if (config.keep_best) best = snapshot(trainable);
    }
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);
    if (config.target_map > 0 && monitored >= config.target_map) break;
    if (config.stop_after > 0 && result.history.size() >= config.stop_after) break;
  }
  if (config.keep_best) {
    restore(trainable, best);
  } else {
    result.best_epoch = result.history.back().epoch;
  }

  peft::BundleInfo info;
  info.catalog = catalog.id();
  info.domain = config.domain.empty() ? manifest.generator.value("domain", "standard") : config.domain;
  nlohmann::json history = nlohmann::json::array();
  const auto& chosen = result.history[result.best_epoch];
  info.extra = {{"normalization", {{"mean", manifest.normalization.mean}, {"std", manifest.normalization.std}}},
                {"image_size", manifest.image_size},
                {"training",
                 {{"config", config},
                  {"epochs_run", result.history.size()},
                  {"best_epoch", result.best_epoch},
                  {"metrics", chosen.to_json()}}}};
  result.trained.info = info;
  result.record = make_record(model, info, base_hash, config.id);
  return result;
}

}  // namespace pa::reg
