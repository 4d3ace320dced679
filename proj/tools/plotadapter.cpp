#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "plotadapter/backbone/checkpoint.hpp"
#include "plotadapter/registry/report.hpp"
#include "plotadapter/registry/store.hpp"
#include "plotadapter/registry/train.hpp"

using namespace pa;
namespace fs = std::filesystem;

namespace {

// Where a backbone comes from: a checkpoint file or a registry store.
struct BackboneSource {
  std::string checkpoint;
  std::string store;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--backbone", checkpoint, "Backbone checkpoint file");
    cmd->add_option("--store", store, "Registry store whose backbone to use");
  }

  std::unique_ptr<vit::Backbone> load() const {
    if (!store.empty()) return reg::RegistryStore(store).load_backbone();
    if (!checkpoint.empty()) return vit::load_checkpoint(checkpoint);
    throw std::invalid_argument("need --backbone or --store");
  }
};

// A record is either a bundle file or catalog/domain/id inside --store.
reg::AdapterRecord load_record(const std::string& ref, const std::string& store) {
  if (fs::is_regular_file(ref)) return reg::record_from_payload(vit::read_bytes(ref), fs::path(ref).stem().string());
  if (store.empty()) throw std::invalid_argument("record file not found: " + ref);
  const auto a = ref.find('/'), b = ref.rfind('/');
  if (a == std::string::npos || a == b) throw std::invalid_argument("record must be a file or catalog/domain/id: " + ref);
  return reg::RegistryStore(store).get(ref.substr(0, a), ref.substr(a + 1, b - a - 1), ref.substr(b + 1));
}

std::vector<std::size_t> parse_grid(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos)
      throw std::invalid_argument("bad grid entry: '" + item + "'");
    out.push_back(std::stoul(item));
  }
  if (out.empty()) throw std::invalid_argument("empty grid");
  return out;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plot-to-API recommendation with parameter-efficient adapters"};
  app.require_subcommand(1);
  // Buffered so failures leave stdout empty.
  std::ostringstream out;

  // backbone -----------------------------------------------------------------
  auto* bb = app.add_subcommand("backbone", "Create a seeded backbone checkpoint");
  std::string bb_preset = "desk", bb_out, bb_dtype = "f32";
  std::uint64_t bb_seed = 0;
  bb->add_option("--preset", bb_preset, "desk or vit-b16")->capture_default_str();
  bb->add_option("--seed", bb_seed)->capture_default_str();
  bb->add_option("--dtype", bb_dtype, "f32 or f64")->capture_default_str();
  bb->add_option("--out", bb_out)->required();
  bb->callback([&] {
    vit::Backbone backbone(vit::BackboneConfig::preset(bb_preset, 13), num::parse_dtype(bb_dtype), bb_seed);
    vit::save_checkpoint(backbone, bb_out);
    out << backbone.content_hash() << "\n";
  });

  // generate -----------------------------------------------------------------
  auto* gen = app.add_subcommand("generate", "Render a synthetic plot dataset");
  synth::GenerateConfig gcfg;
  std::string g_mix = "uniform", g_domain = "standard", g_out;
  gen->add_option("-n,--n", gcfg.n, "Number of samples")->capture_default_str();
  gen->add_option("--mix", g_mix, "uniform or long_tail")->capture_default_str();
  gen->add_option("--tail-ratio", gcfg.tail_ratio)->capture_default_str();
  gen->add_option("--multi-label-prob", gcfg.multi_label_prob)->capture_default_str();
  gen->add_option("--domain", g_domain, "standard, hand_drawn or mixed")->capture_default_str();
  gen->add_option("--seed", gcfg.seed)->capture_default_str();
  gen->add_option("--image-size", gcfg.image_size)->capture_default_str();
  gen->add_option("--out", g_out, "Output directory")->required();
  gen->callback([&] {
    gcfg.mix = synth::parse_mix(g_mix);
    gcfg.domain = synth::parse_domain_mix(g_domain);
    const auto m = synth::generate_dataset(gcfg, g_out);
    out << (fs::path(g_out) / "manifest.jsonl").string() << " " << m.records.size() << " samples\n";
  });

  // train --------------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "Train a strategy and write its record");
  std::string t_config, t_strategy, t_manifest, t_out, t_history, t_precision, t_monitor, t_domain;
  std::optional<std::size_t> t_bottleneck, t_prompts, t_epochs, t_batch, t_stop_after;
  std::optional<double> t_lr, t_target;
  std::optional<std::uint64_t> t_seed;
  std::optional<bool> t_augment;
  BackboneSource t_source;
  tr->add_option("--config", t_config, "key=value or JSON config file");
  tr->add_option("--strategy", t_strategy, "e.g. plot_adapter_v2-16, vpt-8, linear, full");
  tr->add_option("--bottleneck", t_bottleneck, "Adapter bottleneck D'");
  tr->add_option("--prompts", t_prompts, "VPT prompt count");
  tr->add_option("--manifest", t_manifest);
  tr->add_option("--epochs", t_epochs);
  tr->add_option("--batch-size", t_batch);
  tr->add_option("--lr", t_lr);
  tr->add_option("--seed", t_seed);
  tr->add_option("--precision", t_precision, "f32 or f64");
  tr->add_option("--augment", t_augment, "true or false");
  tr->add_option("--monitor", t_monitor, "val or train");
  tr->add_option("--target-map", t_target, "Stop once the monitored mAP reaches this");
  tr->add_option("--stop-after", t_stop_after, "Run at most this many epochs");
  tr->add_option("--domain", t_domain, "Domain tag of the record");
  tr->add_option("--out", t_out, "Record file to write")->required();
  tr->add_option("--history", t_history, "Also write the per-epoch JSONL history here");
  t_source.add_to(tr);
  tr->callback([&] {
    reg::TrainConfig c = t_config.empty() ? reg::TrainConfig{} : reg::load_train_config(t_config);
    if (!t_strategy.empty()) {
      const bool sized = t_strategy.find_last_of("0123456789") == t_strategy.size() - 1 &&
                         t_strategy.find('-') != std::string::npos;
      const auto keep = c.strategy;
      c.strategy = sized ? peft::StrategySpec::parse(t_strategy)
                         : peft::StrategySpec::of(peft::parse_kind(t_strategy), keep.dim);
      c.strategy.influence = keep.influence;
      c.strategy.se_reduction = keep.se_reduction;
      c.strategy.block = keep.block;
      c.strategy.shared_init = keep.shared_init;
      c.strategy.vanilla_activation = keep.vanilla_activation;
      c.strategy.init_bound = keep.init_bound;
    }
    if (t_bottleneck && t_prompts) throw std::invalid_argument("--bottleneck and --prompts are exclusive");
    if (t_bottleneck) {
      if (!c.strategy.is_adapter()) throw std::invalid_argument("--bottleneck applies to adapter strategies");
      c.strategy.dim = *t_bottleneck;
    }
    if (t_prompts) {
      if (c.strategy.kind != peft::Kind::vpt) throw std::invalid_argument("--prompts applies to vpt");
      c.strategy.dim = *t_prompts;
    }
    if (!t_manifest.empty()) c.manifest = t_manifest;
    if (t_epochs) c.epochs = *t_epochs;
    if (t_batch) c.batch_size = *t_batch;
    if (t_lr) c.lr = *t_lr;
    if (t_seed) c.seed = *t_seed;
    if (!t_precision.empty()) c.precision = num::parse_dtype(t_precision);
    if (t_augment) c.augment = *t_augment;
    if (!t_monitor.empty()) c.monitor = t_monitor;
    if (t_target) c.target_map = *t_target;
    if (t_stop_after) c.stop_after = *t_stop_after;
    if (!t_domain.empty()) c.domain = t_domain;
    if (c.manifest.empty()) throw std::invalid_argument("need --manifest or a config with manifest");
    c.validate();
    auto backbone = t_source.load();
    std::ofstream history;
    if (!t_history.empty()) history.open(t_history);
    auto result = reg::train(c, *backbone, [&](const reg::EpochMetrics& m) {
      const auto line = m.to_json().dump();
      std::clog << line << std::endl;
      if (history) history << line << "\n";
    });
    vit::write_bytes(t_out, result.record.payload);
    out << nlohmann::json{{"record", t_out},
                          {"strategy", result.record.strategy.label()},
                          {"epochs_run", result.history.size()},
                          {"best_epoch", result.best_epoch},
                          {"size_bytes", result.record.size_bytes()}}
                .dump()
        << "\n";
  });

  // eval ---------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "Evaluate a record on a manifest split");
  std::string e_record, e_manifest, e_split = "val";
  bool e_json = false;
  BackboneSource e_source;
  ev->add_option("--record", e_record, "Record file or catalog/domain/id with --store")->required();
  ev->add_option("--manifest", e_manifest)->required();
  ev->add_option("--split", e_split)->capture_default_str();
  ev->add_flag("--json", e_json, "Print the report as JSON");
  e_source.add_to(ev);
  ev->callback([&] {
    const auto record = load_record(e_record, e_source.store);
    auto backbone = e_source.load();
    const auto report = reg::evaluate(record, *backbone, synth::read_manifest(e_manifest), e_split);
    out << (e_json ? report.to_json().dump(2) + "\n" : report.to_text());
  });

  // params -------------------------------------------------------------------
  auto* pr = app.add_subcommand("params", "Trainable parameter counts per strategy");
  std::string p_grid = "4,8,16,64", p_preset = "vit-b16";
  bool p_json = false;
  pr->add_option("--grid", p_grid, "Comma-separated D'/p values")->capture_default_str();
  pr->add_option("--preset", p_preset, "vit-b16 or desk")->capture_default_str();
  pr->add_flag("--json", p_json);
  pr->callback([&] {
    const auto rows = reg::params_report(parse_grid(p_grid), vit::BackboneConfig::preset(p_preset, 13));
    out << (p_json ? reg::params_json(rows).dump(2) + "\n" : reg::params_table(rows));
  });

  // registry -----------------------------------------------------------------
  auto* rg = app.add_subcommand("registry", "Manage a store of records over one backbone");
  rg->require_subcommand(1);
  std::string r_store;
  rg->add_option("--store", r_store, "Store directory")->required();

  auto* r_init = rg->add_subcommand("init", "Create a store around a backbone checkpoint");
  std::string ri_backbone;
  r_init->add_option("--backbone", ri_backbone)->required();
  r_init->callback([&] {
    auto store = reg::RegistryStore::init(r_store, *vit::load_checkpoint(ri_backbone));
    out << store.backbone_hash() << "\n";
  });

  auto* r_put = rg->add_subcommand("put", "Add a record file");
  std::string rp_record, rp_id;
  r_put->add_option("--record", rp_record)->required();
  r_put->add_option("--id", rp_id, "Record id; defaults to a payload hash prefix");
  r_put->callback([&] {
    auto record = reg::record_from_payload(vit::read_bytes(rp_record), rp_id);
    reg::RegistryStore store(r_store);
    const auto id = store.put(record);
    out << record.catalog << "/" << record.domain << "/" << id << "\n";
  });

  auto* r_get = rg->add_subcommand("get", "Copy a record out of the store");
  std::string rg_catalog, rg_domain, rg_id, rg_out;
  r_get->add_option("--catalog", rg_catalog)->required();
  r_get->add_option("--domain", rg_domain)->required();
  r_get->add_option("--id", rg_id)->required();
  r_get->add_option("--out", rg_out)->required();
  r_get->callback([&] {
    const auto record = reg::RegistryStore(r_store).get(rg_catalog, rg_domain, rg_id);
    vit::write_bytes(rg_out, record.payload);
    out << rg_out << " " << record.size_bytes() << " bytes\n";
  });

  auto* r_list = rg->add_subcommand("list", "List stored records");
  bool rl_json = false;
  r_list->add_flag("--json", rl_json);
  r_list->callback([&] {
    reg::RegistryStore store(r_store);
    const auto entries = store.list();
    if (rl_json) {
      auto arr = nlohmann::json::array();
      for (const auto& e : entries)
        arr.push_back({{"catalog", e.catalog}, {"domain", e.domain}, {"id", e.id}, {"strategy", e.strategy}, {"size", e.size}});
      out << nlohmann::json{{"backbone_hash", store.backbone_hash()},
                            {"backbone_size", store.backbone_size()},
                            {"records", arr}}
                 .dump(2)
          << "\n";
      return;
    }
    for (const auto& e : entries)
      out << e.catalog << "\t" << e.domain << "\t" << e.id << "\t" << e.strategy << "\t" << e.size << "\n";
  });

  auto* r_rm = rg->add_subcommand("rm", "Remove a record");
  std::string rr_catalog, rr_domain, rr_id;
  r_rm->add_option("--catalog", rr_catalog)->required();
  r_rm->add_option("--domain", rr_domain)->required();
  r_rm->add_option("--id", rr_id)->required();
  r_rm->callback([&] { reg::RegistryStore(r_store).remove(rr_catalog, rr_domain, rr_id); });

  // recommend ----------------------------------------------------------------
  auto* rc = app.add_subcommand("recommend", "Rank catalog APIs for a plot image");
  std::string c_image, c_record;
  std::optional<std::size_t> c_top_k;
  std::optional<double> c_threshold;
  bool c_json = false;
  BackboneSource c_source;
  rc->add_option("--image", c_image)->required();
  rc->add_option("--record", c_record, "Record file or catalog/domain/id with --store")->required();
  auto* k_opt = rc->add_option("--top-k", c_top_k);
  rc->add_option("--threshold", c_threshold)->excludes(k_opt);
  rc->add_flag("--json", c_json);
  c_source.add_to(rc);
  rc->callback([&] {
    const auto options = c_threshold ? task::RecommendOptions::at_least(*c_threshold)
                                     : task::RecommendOptions::top(c_top_k.value_or(3));
    const auto record = load_record(c_record, c_source.store);
    auto backbone = c_source.load();
    const auto loaded = reg::instantiate(record, *backbone);
    const auto ranked = reg::recommend_image(loaded, c_image, options);
    if (c_json) {
      auto arr = nlohmann::json::array();
      for (const auto& r : ranked) arr.push_back({{"api", r.api}, {"probability", r.probability}});
      out << arr.dump() << "\n";
      return;
    }
    for (const auto& r : ranked) out << r.api << " " << fixed(r.probability) << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& ch : msg)
      if (ch == '\n') ch = ' ';
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
  std::cout << out.str();
  return 0;
}
