#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "plotadapter/synthplot/render.hpp"

namespace pa::synth {

inline constexpr int kManifestVersion = 1;

enum class Mix { uniform, long_tail };
enum class DomainMix { standard, hand_drawn, mixed };

const char* mix_name(Mix mix);
Mix parse_mix(const std::string& name);
const char* domain_mix_name(DomainMix mix);
DomainMix parse_domain_mix(const std::string& name);

struct GenerateConfig {
  std::size_t n = 130;
  Mix mix = Mix::uniform;
  /// Ratio between consecutive class frequencies (catalog order) under long_tail.
  double tail_ratio = 0.8;
  /// Probability that a sample gets extra compatible classes.
  double multi_label_prob = 0.3;
  DomainMix domain = DomainMix::standard;
  std::uint64_t seed = 0;
  std::size_t image_size = 64;

  void validate() const;
};

void to_json(nlohmann::json& j, const GenerateConfig& c);
void from_json(const nlohmann::json& j, GenerateConfig& c);

struct Normalization {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> std{0.5, 0.5, 0.5};
  bool operator==(const Normalization&) const = default;
};

struct ManifestRecord {
  std::string path;                 // relative to the manifest directory
  std::vector<std::string> labels;  // rendered classes, primary first
  Domain domain = Domain::standard;
  std::string split;                // "train" or "val"
  std::uint64_t seed = 0;

  bool operator==(const ManifestRecord&) const = default;
};

struct Manifest {
  int version = kManifestVersion;
  std::string catalog = "python-13";
  std::size_t image_size = 64;
  Normalization normalization;
  nlohmann::json generator = nlohmann::json::object();
  std::vector<ManifestRecord> records;
  /// Directory that record paths are relative to.
  std::filesystem::path root;

  std::filesystem::path image_path(const ManifestRecord& r) const { return root / r.path; }
  std::vector<std::size_t> split_indices(const std::string& split) const;
};

/// Header line then one record per line.
std::string manifest_to_jsonl(const Manifest& manifest);
/// Throws std::invalid_argument on malformed content.
Manifest manifest_from_jsonl(const std::string& text, const std::filesystem::path& root);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

/// Primary class of each sample, before shuffling: per-class counts by the
/// largest-remainder method.
std::vector<std::size_t> class_counts(const GenerateConfig& config);

/// Renders the dataset into out_dir (images/NNNNN.png and manifest.jsonl).
/// Throws std::runtime_error when the directory cannot be written.
Manifest generate_dataset(const GenerateConfig& config, const std::filesystem::path& out_dir);

struct Violation {
  enum class Kind { unreadable, resolution, unknown_label, no_label, bad_split, split_drift, bad_header };
  Kind kind;
  std::optional<std::size_t> record;
  std::string message;
};

const char* violation_name(Violation::Kind kind);

struct ValidateOptions {
  /// Minimum width and height; 0 uses the manifest image size.
  std::size_t min_resolution = 0;
};

/// Lists every problem found; an empty result means the dataset is valid.
std::vector<Violation> manifest_validate(const Manifest& manifest, const ValidateOptions& options = {});

}  // namespace pa::synth
