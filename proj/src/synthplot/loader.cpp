#include "plotadapter/synthplot/loader.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pa::synth {

num::Tensor resize_bilinear(const num::Tensor& src, std::size_t height, std::size_t width) {
  if (src.rank() != 3) throw num::DimensionError("resize_bilinear: expected [C,H,W]");
  if (height == 0 || width == 0) throw num::DimensionError("resize_bilinear: empty target");
  const std::size_t C = src.dim(0), H = src.dim(1), W = src.dim(2);
  if (H == height && W == width) return src;
  num::Tensor out({C, height, width}, src.dtype());
  num::dispatch(src.dtype(), [&]<class T>() {
    auto in = src.data<T>();
    auto o = out.data<T>();
    const double sy = static_cast<double>(H) / height, sx = static_cast<double>(W) / width;
    for (std::size_t y = 0; y < height; ++y) {
      const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(H - 1));
      const std::size_t y0 = static_cast<std::size_t>(fy), y1 = std::min(y0 + 1, H - 1);
      const double wy = fy - y0;
      for (std::size_t x = 0; x < width; ++x) {
        const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(W - 1));
        const std::size_t x0 = static_cast<std::size_t>(fx), x1 = std::min(x0 + 1, W - 1);
        const double wx = fx - x0;
        for (std::size_t c = 0; c < C; ++c) {
          const T* p = in.data() + c * H * W;
          const double top = p[y0 * W + x0] * (1 - wx) + p[y0 * W + x1] * wx;
          const double bottom = p[y1 * W + x0] * (1 - wx) + p[y1 * W + x1] * wx;
          o[(c * height + y) * width + x] = static_cast<T>(top * (1 - wy) + bottom * wy);
        }
      }
    }
  });
  return out;
}

num::Tensor preprocess(const RgbImage& image, std::size_t size, const Normalization& norm, num::DType dtype) {
  auto t = resize_bilinear(to_tensor(image, num::DType::f64), size, size);
  const std::size_t plane = size * size;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < plane; ++i)
      t.set(c * plane + i, (t.at(c * plane + i) - norm.mean[c]) / norm.std[c]);
  return t.cast(dtype);
}

void horizontal_flip(num::Tensor& t) {
  if (t.rank() != 3) throw num::DimensionError("horizontal_flip: expected [C,H,W]");
  const std::size_t rows = t.dim(0) * t.dim(1), W = t.dim(2);
  num::dispatch(t.dtype(), [&]<class T>() {
    auto d = t.data<T>();
    for (std::size_t r = 0; r < rows; ++r) std::reverse(d.begin() + r * W, d.begin() + (r + 1) * W);
  });
}

bool random_erase(num::Tensor& t, num::Rng& rng, const EraseOptions& o) {
  if (t.rank() != 3) throw num::DimensionError("random_erase: expected [C,H,W]");
  if (!rng.bernoulli(o.probability)) return false;
  const std::size_t C = t.dim(0), H = t.dim(1), W = t.dim(2);
  const double area = static_cast<double>(H * W);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * rng.uniform(o.min_area, o.max_area);
    const double aspect = std::exp(rng.uniform(std::log(o.min_aspect), std::log(o.max_aspect)));
    const auto h = static_cast<std::size_t>(std::lround(std::sqrt(target * aspect)));
    const auto w = static_cast<std::size_t>(std::lround(std::sqrt(target / aspect)));
    if (h == 0 || w == 0 || h >= H || w >= W) continue;
    const std::size_t y0 = rng.below(H - h + 1), x0 = rng.below(W - w + 1);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = y0; y < y0 + h; ++y)
        for (std::size_t x = x0; x < x0 + w; ++x) t.set((c * H + y) * W + x, rng.normal());
    return true;
  }
  return false;
}

BatchLoader::BatchLoader(const Manifest& manifest, const std::string& split, const LoaderOptions& options)
    : split_(split), options_(options), augment_(options.augment && split == "train") {
  if (options_.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  const auto& catalog = task::ApiCatalog::builtin(manifest.catalog);
  const std::size_t size = options_.image_size ? options_.image_size : manifest.image_size;
  const Normalization norm = options_.normalization.value_or(manifest.normalization);
  for (std::size_t i : manifest.split_indices(split)) {
    const auto& r = manifest.records[i];
    for (const auto& l : r.labels)
      if (!catalog.contains(l))
        throw std::invalid_argument(r.path + ": label '" + l + "' is not in catalog " + catalog.id());
    labels_.push_back(task::LabelVector::from_names(catalog, r.labels));
    base_.push_back(preprocess(read_png(manifest.image_path(r)), size, norm, options_.dtype));
    records_.push_back(i);
  }
  if (base_.empty()) throw std::invalid_argument("split '" + split + "' has no samples");
}

std::size_t BatchLoader::batches_per_epoch() const {
  return (base_.size() + options_.batch_size - 1) / options_.batch_size;
}

std::vector<Batch> BatchLoader::epoch(std::size_t index) const {
  const std::uint64_t epoch_seed = num::Rng::derive(options_.seed, index);
  std::vector<std::size_t> order(base_.size());
  std::iota(order.begin(), order.end(), 0);
  if (options_.shuffle) {
    num::Rng rng(epoch_seed);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  }
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += options_.batch_size) {
    Batch b;
    for (std::size_t k = start; k < std::min(order.size(), start + options_.batch_size); ++k) {
      const std::size_t j = order[k];
      num::Tensor img = base_[j];
      if (augment_) {
        num::Rng rng(num::Rng::derive(epoch_seed, 1 + k));
        if (rng.bernoulli(options_.flip_probability)) horizontal_flip(img);
        random_erase(img, rng, options_.erase);
      }
      b.images.push_back(std::move(img));
      b.labels.push_back(labels_[j]);
      b.records.push_back(records_[j]);
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace pa::synth
