#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "plotadapter/numerics/rng.hpp"
#include "plotadapter/synthplot/dataset.hpp"

namespace pa::synth {

/// Bilinear resize of a [C,H,W] tensor (half-pixel centres, edge clamped).
num::Tensor resize_bilinear(const num::Tensor& chw, std::size_t height, std::size_t width);

/// RGB image -> [3,size,size] tensor, resized and normalized per channel.
num::Tensor preprocess(const RgbImage& image, std::size_t size, const Normalization& norm, num::DType dtype);

void horizontal_flip(num::Tensor& chw);

struct EraseOptions {
  double probability = 0.5;
  double min_area = 0.02;
  double max_area = 0.33;
  double min_aspect = 0.3;
  double max_aspect = 3.3;
};

/// Replaces one random rectangle with standard-normal noise. Returns false
/// when nothing was erased.
bool random_erase(num::Tensor& chw, num::Rng& rng, const EraseOptions& options = {});

struct LoaderOptions {
  std::size_t batch_size = 32;
  /// Flip and erase; only ever applied to the train split.
  bool augment = false;
  bool shuffle = false;
  std::uint64_t seed = 0;
  /// Output resolution; 0 keeps the manifest image size.
  std::size_t image_size = 0;
  num::DType dtype = num::DType::f32;
  /// Overrides the manifest statistics, e.g. with those a model was trained on.
  std::optional<Normalization> normalization;
  double flip_probability = 0.5;
  EraseOptions erase;
};

struct Batch {
  std::vector<num::Tensor> images;
  std::vector<task::LabelVector> labels;
  std::vector<std::size_t> records;  // manifest indices

  std::size_t size() const { return images.size(); }
};

/// Decodes one split up front and serves deterministic batches per epoch.
class BatchLoader {
 public:
  /// Throws ImageError for missing files and std::invalid_argument for labels
  /// outside the catalog or an empty split.
  BatchLoader(const Manifest& manifest, const std::string& split, const LoaderOptions& options);

  std::size_t size() const { return base_.size(); }
  std::size_t batches_per_epoch() const;
  const std::string& split() const { return split_; }
  bool augmenting() const { return augment_; }

  /// All batches of one epoch; the same epoch index always yields the same data.
  std::vector<Batch> epoch(std::size_t index) const;

 private:
  std::string split_;
  LoaderOptions options_;
  bool augment_;
  std::vector<std::size_t> records_;
  std::vector<num::Tensor> base_;
  std::vector<task::LabelVector> labels_;
};

}  // namespace pa::synth
