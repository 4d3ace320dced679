#include "plotadapter/synthplot/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "plotadapter/backbone/checkpoint.hpp"
#include "plotadapter/numerics/rng.hpp"

namespace pa::synth {

namespace {

using num::Rng;

std::string record_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "images/%05zu.png", i);
  return buf;
}

}  // namespace

const char* mix_name(Mix mix) { return mix == Mix::uniform ? "uniform" : "long_tail"; }

Mix parse_mix(const std::string& name) {
  if (name == "uniform") return Mix::uniform;
  if (name == "long_tail" || name == "long-tail") return Mix::long_tail;
  throw std::invalid_argument("unknown class mix '" + name + "'");
}

const char* domain_mix_name(DomainMix mix) {
  switch (mix) {
    case DomainMix::standard: return "standard";
    case DomainMix::hand_drawn: return "hand_drawn";
    case DomainMix::mixed: return "mixed";
  }
  return "?";
}

DomainMix parse_domain_mix(const std::string& name) {
  if (name == "standard") return DomainMix::standard;
  if (name == "hand_drawn" || name == "hand-drawn") return DomainMix::hand_drawn;
  if (name == "mixed") return DomainMix::mixed;
  throw std::invalid_argument("unknown domain '" + name + "'");
}

void GenerateConfig::validate() const {
  const std::size_t m = plot_classes().size();
  if (n < m) throw std::invalid_argument("dataset needs at least " + std::to_string(m) + " samples");
  if (!(tail_ratio > 0.0 && tail_ratio <= 1.0)) throw std::invalid_argument("tail_ratio must be in (0, 1]");
  if (!(multi_label_prob >= 0.0 && multi_label_prob <= 1.0))
    throw std::invalid_argument("multi_label_prob must be in [0, 1]");
  if (image_size < 16) throw std::invalid_argument("image_size must be at least 16");
}

void to_json(nlohmann::json& j, const GenerateConfig& c) {
  j = {{"n", c.n},
       {"mix", mix_name(c.mix)},
       {"tail_ratio", c.tail_ratio},
       {"multi_label_prob", c.multi_label_prob},
       {"domain", domain_mix_name(c.domain)},
       {"seed", c.seed},
       {"image_size", c.image_size}};
}

void from_json(const nlohmann::json& j, GenerateConfig& c) {
  c = GenerateConfig{};
  c.n = j.value("n", c.n);
  if (j.contains("mix")) c.mix = parse_mix(j["mix"].get<std::string>());
  c.tail_ratio = j.value("tail_ratio", c.tail_ratio);
  c.multi_label_prob = j.value("multi_label_prob", c.multi_label_prob);
  if (j.contains("domain")) c.domain = parse_domain_mix(j["domain"].get<std::string>());
  c.seed = j.value("seed", c.seed);
  c.image_size = j.value("image_size", c.image_size);
}

std::vector<std::size_t> Manifest::split_indices(const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == split) out.push_back(i);
  return out;
}

std::string manifest_to_jsonl(const Manifest& m) {
  std::ostringstream os;
  nlohmann::json header = {{"version", m.version},
                           {"catalog", m.catalog},
                           {"image_size", m.image_size},
                           {"normalization", {{"mean", m.normalization.mean}, {"std", m.normalization.std}}},
                           {"generator", m.generator}};
  os << header.dump() << "\n";
  for (const auto& r : m.records) {
    nlohmann::json j = {
        {"path", r.path}, {"labels", r.labels}, {"domain", domain_name(r.domain)}, {"split", r.split}, {"seed", r.seed}};
    os << j.dump() << "\n";
  }
  return os.str();
}

Manifest manifest_from_jsonl(const std::string& text, const std::filesystem::path& root) {
  std::istringstream is(text);
  std::string line;
  Manifest m;
  m.root = root;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      if (!have_header) {
        m.version = j.at("version").get<int>();
        if (m.version != kManifestVersion)
          throw std::invalid_argument("unsupported manifest version " + std::to_string(m.version));
        m.catalog = j.at("catalog").get<std::string>();
        m.image_size = j.at("image_size").get<std::size_t>();
        m.normalization.mean = j.at("normalization").at("mean").get<std::array<double, 3>>();
        m.normalization.std = j.at("normalization").at("std").get<std::array<double, 3>>();
        m.generator = j.value("generator", nlohmann::json::object());
        have_header = true;
        continue;
      }
      ManifestRecord r;
      r.path = j.at("path").get<std::string>();
      r.labels = j.at("labels").get<std::vector<std::string>>();
      r.domain = parse_domain(j.at("domain").get<std::string>());
      r.split = j.at("split").get<std::string>();
      r.seed = j.at("seed").get<std::uint64_t>();
      m.records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("manifest line " + std::to_string(lineno) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_header) throw std::invalid_argument("manifest has no header line");
  return m;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  const auto text = manifest_to_jsonl(manifest);
  vit::write_bytes(path, std::as_bytes(std::span(text.data(), text.size())));
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return manifest_from_jsonl(ss.str(), path.parent_path());
}

std::vector<std::size_t> class_counts(const GenerateConfig& config) {
  config.validate();
  const std::size_t m = plot_classes().size();
  std::vector<double> weight(m, 1.0);
  if (config.mix == Mix::long_tail)
    for (std::size_t i = 1; i < m; ++i) weight[i] = weight[i - 1] * config.tail_ratio;
  const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
  std::vector<std::size_t> counts(m);
  std::vector<std::pair<double, std::size_t>> remainder;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double exact = static_cast<double>(config.n) * weight[i] / total;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    remainder.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainder.begin(), remainder.end(), [](auto a, auto b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < config.n; ++k, ++assigned) ++counts[remainder[k].second];
  // Keep counts non-increasing in rank even when remainders tie unevenly.
  if (config.mix == Mix::long_tail) std::sort(counts.begin(), counts.end(), std::greater<>());
  return counts;
}

Manifest generate_dataset(const GenerateConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  const auto& classes = plot_classes();
  const auto counts = class_counts(config);

  // Primary classes, shuffled once with the master seed.
  std::vector<std::size_t> primary;
  for (std::size_t c = 0; c < counts.size(); ++c) primary.insert(primary.end(), counts[c], c);
  Rng shuffle(Rng::derive(config.seed, 0));
  for (std::size_t i = primary.size(); i > 1; --i) std::swap(primary[i - 1], primary[shuffle.below(i)]);

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw std::runtime_error("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  Manifest m;
  m.image_size = config.image_size;
  m.generator = config;
  m.root = out_dir;
  std::vector<std::size_t> seen(classes.size(), 0);
  std::array<double, 3> sum{}, sum_sq{};
  double pixels = 0;
  for (std::size_t i = 0; i < primary.size(); ++i) {
    const std::size_t c = primary[i];
    const std::size_t occurrence = seen[c]++;
    const std::uint64_t seed = Rng::derive(config.seed, 1 + i);
    Rng pick(Rng::derive(seed, 1000));

    std::vector<std::string> names{classes[c]};
    if (!exclusive_class(classes[c]) && pick.bernoulli(config.multi_label_prob)) {
      const std::size_t extra = 1 + pick.below(2);
      std::vector<std::string> pool;
      for (const auto& other : classes)
        if (compatible(classes[c], other)) pool.push_back(other);
      for (std::size_t k = 0; k < extra && !pool.empty(); ++k) {
        const std::size_t j = pick.below(pool.size());
        names.push_back(pool[j]);
        pool.erase(pool.begin() + static_cast<long>(j));
      }
    }
    Domain domain = Domain::standard;
    if (config.domain == DomainMix::hand_drawn) domain = Domain::hand_drawn;
    if (config.domain == DomainMix::mixed) domain = occurrence % 2 ? Domain::hand_drawn : Domain::standard;

    auto sample = render_sample(names, domain, seed, config.image_size);
    ManifestRecord r{record_name(i), names, domain, occurrence % 5 == 4 ? "val" : "train", seed};
    try {
      write_png(out_dir / r.path, sample.image);
    } catch (const ImageError& e) {
      throw std::runtime_error(e.what());
    }
    for (std::size_t p = 0; p < sample.image.width * sample.image.height; ++p)
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = sample.image.pixels[p * 3 + ch] / 255.0;
        sum[ch] += v;
        sum_sq[ch] += v * v;
      }
    pixels += static_cast<double>(sample.image.width * sample.image.height);
    m.records.push_back(std::move(r));
  }
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const double mean = sum[ch] / pixels;
    m.normalization.mean[ch] = mean;
    m.normalization.std[ch] = std::max(1e-3, std::sqrt(std::max(0.0, sum_sq[ch] / pixels - mean * mean)));
  }
  write_manifest(m, out_dir / "manifest.jsonl");
  return m;
}

const char* violation_name(Violation::Kind kind) {
  switch (kind) {
    case Violation::Kind::unreadable: return "unreadable";
    case Violation::Kind::resolution: return "resolution";
    case Violation::Kind::unknown_label: return "unknown_label";
    case Violation::Kind::no_label: return "no_label";
    case Violation::Kind::bad_split: return "bad_split";
    case Violation::Kind::split_drift: return "split_drift";
    case Violation::Kind::bad_header: return "bad_header";
  }
  return "?";
}

std::vector<Violation> manifest_validate(const Manifest& m, const ValidateOptions& options) {
  std::vector<Violation> out;
  const task::ApiCatalog* catalog = nullptr;
  try {
    catalog = &task::ApiCatalog::builtin(m.catalog);
  } catch (const std::invalid_argument& e) {
    out.push_back({Violation::Kind::bad_header, std::nullopt, e.what()});
  }
  for (std::size_t ch = 0; ch < 3; ++ch)
    if (!(m.normalization.std[ch] > 0))
      out.push_back({Violation::Kind::bad_header, std::nullopt, "normalization std must be positive"});
  const std::size_t floor = options.min_resolution ? options.min_resolution : m.image_size;

  std::map<std::string, std::pair<std::size_t, std::size_t>> per_class;  // primary -> (total, val)
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    try {
      auto [w, h] = png_size(m.image_path(r));
      read_png(m.image_path(r));
      if (w < floor || h < floor)
        out.push_back({Violation::Kind::resolution, i,
                       r.path + " is " + std::to_string(w) + "x" + std::to_string(h) + ", below " +
                           std::to_string(floor) + "x" + std::to_string(floor)});
    } catch (const ImageError& e) {
      out.push_back({Violation::Kind::unreadable, i, e.what()});
    }
    if (r.labels.empty()) out.push_back({Violation::Kind::no_label, i, r.path + " has no labels"});
    for (const auto& l : r.labels)
      if (catalog && !catalog->contains(l))
        out.push_back({Violation::Kind::unknown_label, i, r.path + " has label '" + l + "' outside " + m.catalog});
    if (r.split != "train" && r.split != "val") {
      out.push_back({Violation::Kind::bad_split, i, r.path + " has split '" + r.split + "'"});
    } else if (!r.labels.empty()) {
      auto& [total, val] = per_class[r.labels.front()];
      ++total;
      val += r.split == "val";
    }
  }
  for (const auto& [name, tv] : per_class) {
    const auto [total, val] = tv;
    const double expected = static_cast<double>(total) / 5.0;
    if (std::abs(static_cast<double>(val) - expected) > 1.0)
      out.push_back({Violation::Kind::split_drift, std::nullopt,
                     "class '" + name + "' has " + std::to_string(val) + " of " + std::to_string(total) +
                         " samples in val, expected about 1 in 5"});
  }
  return out;
}

}  // namespace pa::synth
