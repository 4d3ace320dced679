#include <gtest/gtest.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "plotadapter/synthplot/canvas.hpp"
#include "plotadapter/synthplot/dataset.hpp"
#include "plotadapter/synthplot/loader.hpp"

using namespace pa;
using namespace pa::synth;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("pa_synth_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::size_t ink(const RgbImage& img) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < img.width * img.height; ++i)
    if (img.pixels[i * 3] < 250 || img.pixels[i * 3 + 1] < 250 || img.pixels[i * 3 + 2] < 250) ++n;
  return n;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

GenerateConfig small_config(std::size_t n = 65) {
  GenerateConfig c;
  c.n = n;
  c.seed = 5;
  c.domain = DomainMix::mixed;
  return c;
}

}  // namespace

TEST(Canvas, FilledRectangleCoverage) {
  Canvas c(20, 20, 4);
  c.fill_polygon({{2, 3}, {12, 3}, {12, 8}, {2, 8}}, {0, 0, 0});
  auto img = c.resolve();
  std::size_t dark = 0;
  for (std::size_t y = 0; y < 20; ++y)
    for (std::size_t x = 0; x < 20; ++x) {
      const bool inside = x >= 2 && x < 12 && y >= 3 && y < 8;
      EXPECT_EQ(img.at(x, y, 0), inside ? 0 : 255) << x << "," << y;
      dark += inside;
    }
  EXPECT_EQ(dark, 50u);
}

TEST(Canvas, StrokeAreaMatchesCapsule) {
  Canvas c(40, 40, 8);
  c.stroke({{5, 20}, {35, 20}}, 4.0, {0, 0, 0});
  auto img = c.resolve();
  double coverage = 0;
  for (std::size_t i = 0; i < 40 * 40; ++i) coverage += (255 - img.pixels[i * 3]) / 255.0;
  const double capsule = 30 * 4 + M_PI * 4;  // rectangle plus two half discs
  EXPECT_NEAR(coverage, capsule, 1.5);
}

TEST(Canvas, DashPartitionsLength) {
  std::vector<Point> path{{0, 0}, {10, 0}, {10, 7}};
  auto pieces = dash(path, 3, 2);
  double on = 0;
  for (const auto& p : pieces)
    for (std::size_t i = 0; i + 1 < p.size(); ++i) on += std::hypot(p[i + 1].x - p[i].x, p[i + 1].y - p[i].y);
  // 17 units: on 3, off 2 repeated -> 3+3+3+2(partial) = 11
  EXPECT_NEAR(on, 11.0, 1e-12);
  EXPECT_EQ(pieces.size(), 4u);
}

TEST(Png, RoundTripAndDeterministicBytes) {
  TempDir dir("png");
  RgbImage img(7, 5);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 37);
  write_png(dir.path / "a.png", img);
  write_png(dir.path / "b.png", img);
  EXPECT_EQ(read_png(dir.path / "a.png"), img);
  EXPECT_EQ(slurp(dir.path / "a.png"), slurp(dir.path / "b.png"));
  EXPECT_EQ(png_size(dir.path / "a.png"), (std::pair<std::size_t, std::size_t>{7, 5}));
  std::ofstream(dir.path / "bad.png") << "not a png";
  EXPECT_THROW(read_png(dir.path / "bad.png"), ImageError);
  EXPECT_THROW(read_png(dir.path / "missing.png"), ImageError);
}

// ---------------------------------------------------------------------------

TEST(Render, Deterministic) {
  auto a = render_sample({"plot"}, Domain::standard, 7);
  auto b = render_sample({"plot"}, Domain::standard, 7);
  EXPECT_EQ(a.image, b.image);
  EXPECT_NE(a.image, render_sample({"plot"}, Domain::standard, 8).image);
  for (const auto& name : plot_classes())
    EXPECT_EQ(render_sample({name}, Domain::hand_drawn, 3).image, render_sample({name}, Domain::hand_drawn, 3).image);
}

TEST(Render, DomainChangesPixelsOnly) {
  for (const auto& name : plot_classes()) {
    auto hand = render_sample({name}, Domain::hand_drawn, 11);
    auto clean = render_sample({name}, Domain::standard, 11);
    EXPECT_NE(hand.image, clean.image) << name;
    EXPECT_EQ(hand.labels, clean.labels) << name;
  }
}

TEST(Render, LabelsAreTheRenderedClasses) {
  auto s = render_sample({"bar", "errorbar"}, Domain::standard, 1);
  const auto& c = task::ApiCatalog::python13();
  EXPECT_EQ(s.labels.positives(), 2u);
  EXPECT_EQ(s.labels[c.index_of("bar")], 1);
  EXPECT_EQ(s.labels[c.index_of("errorbar")], 1);
  EXPECT_EQ(s.image.width, 64u);
  EXPECT_EQ(render_sample({"step"}, Domain::standard, 1, 224).image.height, 224u);
}

TEST(Render, RejectsBadClassSets) {
  EXPECT_THROW(render_sample({"pie", "polar"}, Domain::standard, 1), std::invalid_argument);
  EXPECT_THROW(render_sample({"pie", "bar"}, Domain::standard, 1), std::invalid_argument);
  EXPECT_THROW(render_sample({"bar", "bar"}, Domain::standard, 1), std::invalid_argument);
  EXPECT_THROW(render_sample({"surface3d"}, Domain::standard, 1), std::invalid_argument);
  EXPECT_THROW(render_sample({}, Domain::standard, 1), std::invalid_argument);
  EXPECT_THROW(render_sample({"bar", "plot", "step", "stem"}, Domain::standard, 1), std::invalid_argument);
}

TEST(Render, CompatibilityIsSymmetric) {
  for (const auto& a : plot_classes())
    for (const auto& b : plot_classes()) EXPECT_EQ(compatible(a, b), compatible(b, a)) << a << " " << b;
  EXPECT_FALSE(compatible("pie", "polar"));
  EXPECT_TRUE(compatible("bar", "errorbar"));
  EXPECT_EQ(plot_classes(), task::ApiCatalog::python13().apis());
}

TEST(Render, EveryClassDrawsSomethingDistinct) {
  std::set<std::vector<std::uint8_t>> seen;
  for (const auto& name : plot_classes()) {
    auto s = render_sample({name}, Domain::standard, 21);
    EXPECT_GT(ink(s.image), 150u) << name;
    seen.insert(s.image.pixels);
  }
  EXPECT_EQ(seen.size(), plot_classes().size());
}

TEST(Render, ToTensorRange) {
  auto t = to_tensor(render_sample({"pie"}, Domain::standard, 2).image, num::DType::f32);
  EXPECT_EQ(t.shape(), (num::Shape{3, 64, 64}));
  for (double v : t.to_vector()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

// Nearest class centroid on 8x8 average-pooled pixels; chance is 1/13.
TEST(Render, ClassesAreLearnablyDistinct) {
  const auto& classes = plot_classes();
  auto features = [](const RgbImage& img) {
    std::vector<double> f(8 * 8 * 3, 0.0);
    for (std::size_t y = 0; y < 64; ++y)
      for (std::size_t x = 0; x < 64; ++x)
        for (std::size_t c = 0; c < 3; ++c) f[((y / 8) * 8 + x / 8) * 3 + c] += img.at(x, y, c) / 64.0;
    return f;
  };
  std::vector<std::vector<double>> centroid(classes.size(), std::vector<double>(192, 0.0));
  for (std::size_t k = 0; k < classes.size(); ++k)
    for (std::uint64_t s = 0; s < 8; ++s) {
      auto f = features(render_sample({classes[k]}, Domain::standard, 100 + s).image);
      for (std::size_t i = 0; i < f.size(); ++i) centroid[k][i] += f[i] / 8;
    }
  std::size_t correct = 0, total = 0;
  for (std::size_t k = 0; k < classes.size(); ++k)
    for (std::uint64_t s = 0; s < 4; ++s) {
      auto f = features(render_sample({classes[k]}, Domain::standard, 900 + s).image);
      std::size_t best = 0;
      double best_d = 1e300;
      for (std::size_t j = 0; j < classes.size(); ++j) {
        double d = 0;
        for (std::size_t i = 0; i < f.size(); ++i) d += (f[i] - centroid[j][i]) * (f[i] - centroid[j][i]);
        if (d < best_d) best_d = d, best = j;
      }
      correct += best == k;
      ++total;
    }
  EXPECT_GT(static_cast<double>(correct) / total, 3.0 / 13.0) << correct << "/" << total;
}

// ---------------------------------------------------------------------------

TEST(Dataset, ClassCounts) {
  GenerateConfig c;
  c.n = 130;
  EXPECT_EQ(class_counts(c), std::vector<std::size_t>(13, 10));
  c.n = 30;
  auto u = class_counts(c);
  EXPECT_EQ(std::accumulate(u.begin(), u.end(), std::size_t{0}), 30u);
  EXPECT_LE(*std::max_element(u.begin(), u.end()) - *std::min_element(u.begin(), u.end()), 1u);
  c.mix = Mix::long_tail;
  for (std::size_t n : {13u, 50u, 131u, 400u}) {
    c.n = n;
    auto t = class_counts(c);
    EXPECT_EQ(std::accumulate(t.begin(), t.end(), std::size_t{0}), n);
    EXPECT_TRUE(std::is_sorted(t.rbegin(), t.rend())) << n;
  }
  c.n = 12;
  EXPECT_THROW(class_counts(c), std::invalid_argument);
}

TEST(Dataset, SplitIsFourToOne) {
  TempDir dir("split");
  GenerateConfig c;
  c.n = 130;
  c.seed = 3;
  auto m = generate_dataset(c, dir.path);
  EXPECT_EQ(m.split_indices("train").size(), 104u);
  EXPECT_EQ(m.split_indices("val").size(), 26u);
  std::map<std::string, int> val;
  for (const auto& r : m.records)
    if (r.split == "val") ++val[r.labels.front()];
  for (const auto& name : plot_classes()) EXPECT_EQ(val[name], 2) << name;
  EXPECT_TRUE(manifest_validate(m).empty());
}

TEST(Dataset, ByteIdenticalAcrossRuns) {
  TempDir a("det_a"), b("det_b");
  auto c = small_config();
  generate_dataset(c, a.path);
  generate_dataset(c, b.path);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.path)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a.path);
    EXPECT_EQ(slurp(e.path()), slurp(b.path / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 66u);
  c.seed = 6;
  TempDir d("det_c");
  generate_dataset(c, d.path);
  EXPECT_NE(slurp(a.path / "manifest.jsonl"), slurp(d.path / "manifest.jsonl"));
}

TEST(Dataset, RecordsRerenderBitExactly) {
  TempDir dir("rerender");
  auto c = small_config(40);
  c.multi_label_prob = 0.6;
  auto m = generate_dataset(c, dir.path);
  std::set<std::string> domains;
  std::size_t multi = 0;
  for (const auto& r : m.records) {
    auto s = render_sample(r.labels, r.domain, r.seed, m.image_size);
    EXPECT_EQ(read_png(m.image_path(r)), s.image) << r.path;
    domains.insert(domain_name(r.domain));
    multi += r.labels.size() > 1;
    for (std::size_t i = 0; i < r.labels.size(); ++i)
      for (std::size_t j = i + 1; j < r.labels.size(); ++j) EXPECT_TRUE(compatible(r.labels[i], r.labels[j]));
  }
  EXPECT_EQ(domains.size(), 2u);
  EXPECT_GT(multi, 0u);
}

TEST(Dataset, LongTailCountsFollowRank) {
  TempDir dir("tail");
  GenerateConfig c;
  c.n = 200;
  c.mix = Mix::long_tail;
  c.tail_ratio = 0.8;
  auto m = generate_dataset(c, dir.path);
  std::vector<std::size_t> counts(13, 0);
  const auto& cat = task::ApiCatalog::python13();
  for (const auto& r : m.records) ++counts[cat.index_of(r.labels.front())];
  EXPECT_TRUE(std::is_sorted(counts.rbegin(), counts.rend()));
  EXPECT_GT(counts.front(), 3 * counts.back());
}

TEST(Dataset, ManifestRoundTripAndNormalization) {
  TempDir dir("manifest");
  auto m = generate_dataset(small_config(), dir.path);
  auto back = read_manifest(dir.path / "manifest.jsonl");
  EXPECT_EQ(back.records, m.records);
  EXPECT_EQ(back.normalization, m.normalization);
  EXPECT_EQ(back.generator, m.generator);
  EXPECT_EQ(back.generator.get<GenerateConfig>().n, 65u);
  // Stored statistics match a direct pass over the images.
  double sum = 0, sq = 0, count = 0;
  for (const auto& r : m.records) {
    auto img = read_png(m.image_path(r));
    for (std::size_t i = 0; i < img.width * img.height; ++i) {
      const double v = img.pixels[i * 3 + 1] / 255.0;
      sum += v;
      sq += v * v;
      ++count;
    }
  }
  EXPECT_NEAR(m.normalization.mean[1], sum / count, 1e-12);
  EXPECT_NEAR(m.normalization.std[1], std::sqrt(sq / count - (sum / count) * (sum / count)), 1e-9);
  EXPECT_THROW(manifest_from_jsonl("", dir.path), std::invalid_argument);
  EXPECT_THROW(manifest_from_jsonl("{\"version\": 9}", dir.path), std::invalid_argument);
}

TEST(Dataset, UnwritableDirectoryThrows) {
  TempDir dir("unwritable");
  std::ofstream(dir.path / "file") << "x";
  EXPECT_THROW(generate_dataset(small_config(), dir.path / "file" / "sub"), std::runtime_error);
}

TEST(Validate, ReportsEachViolationKind) {
  TempDir dir("validate");
  auto m = generate_dataset(small_config(), dir.path);
  EXPECT_TRUE(manifest_validate(m).empty());

  auto bad = m;
  bad.records[0].labels.push_back("surface3d");
  auto v = manifest_validate(bad);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, Violation::Kind::unknown_label);
  EXPECT_EQ(v[0].record, 0u);

  v = manifest_validate(m, {300});
  EXPECT_EQ(v.size(), m.records.size());
  for (const auto& x : v) EXPECT_EQ(x.kind, Violation::Kind::resolution);

  auto missing = m;
  fs::remove(m.image_path(m.records[3]));
  v = manifest_validate(missing);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, Violation::Kind::unreadable);

  auto drift = m;
  for (auto& r : drift.records) r.split = "train";
  v = manifest_validate(drift);
  EXPECT_FALSE(v.empty());
  for (const auto& x : v) EXPECT_TRUE(x.kind == Violation::Kind::split_drift || x.kind == Violation::Kind::unreadable);
}

// ---------------------------------------------------------------------------

TEST(Loader, ResizeAndFlipBasics) {
  num::Rng rng(1);
  auto t = num::uniform_tensor({3, 6, 5}, 0, 1, rng, num::DType::f64);
  EXPECT_TRUE(resize_bilinear(t, 6, 5).bit_equal(t));
  auto flat = num::Tensor::full({3, 4, 4}, 0.25, num::DType::f64);
  for (double v : resize_bilinear(flat, 9, 7).to_vector()) EXPECT_DOUBLE_EQ(v, 0.25);
  auto up = resize_bilinear(t, 12, 10);
  EXPECT_DOUBLE_EQ(up.at(0), t.at(0));  // corners clamp to the source corner
  auto f = t;
  horizontal_flip(f);
  EXPECT_EQ(f.at(0), t.at(4));
  horizontal_flip(f);
  EXPECT_TRUE(f.bit_equal(t));
}

TEST(Loader, RandomEraseArea) {
  num::Rng rng(2);
  EraseOptions always;
  always.probability = 1.0;
  std::size_t erased = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto t = num::Tensor::full({3, 64, 64}, 100.0, num::DType::f64);
    if (!random_erase(t, rng, always)) continue;
    ++erased;
    std::size_t changed = 0;
    for (std::size_t i = 0; i < 64 * 64; ++i) changed += t.at(i) != 100.0;
    const double frac = changed / 4096.0;
    EXPECT_GE(frac, 0.015);
    EXPECT_LE(frac, 0.36);
  }
  EXPECT_GT(erased, 190u);
  EraseOptions never;
  never.probability = 0.0;
  auto t = num::Tensor::full({3, 8, 8}, 1.0, num::DType::f64);
  EXPECT_FALSE(random_erase(t, rng, never));
}

TEST(Loader, EvalStreamIsDeterministicAndUnaugmented) {
  TempDir dir("loader");
  auto m = generate_dataset(small_config(), dir.path);
  LoaderOptions opt;
  EXPECT_EQ(opt.batch_size, 32u);
  opt.batch_size = 4;
  opt.augment = true;
  opt.shuffle = true;
  BatchLoader val(m, "val", opt);
  EXPECT_FALSE(val.augmenting());
  auto a = val.epoch(0), b = val.epoch(0);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < a[i].size(); ++k) EXPECT_TRUE(a[i].images[k].bit_equal(b[i].images[k]));

  LoaderOptions plain;
  BatchLoader val_plain(m, "val", plain);
  ASSERT_EQ(val_plain.batches_per_epoch(), 1u);
  const auto batch = val_plain.epoch(0)[0];
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto& r = m.records[batch.records[k]];
    EXPECT_TRUE(batch.images[k].bit_equal(
        preprocess(read_png(m.image_path(r)), 64, m.normalization, num::DType::f32)));
  }
}

TEST(Loader, AugmentationPreservesLabels) {
  TempDir dir("augment");
  auto m = generate_dataset(small_config(), dir.path);
  LoaderOptions plain, aug;
  aug.augment = true;
  BatchLoader a(m, "train", plain), b(m, "train", aug);
  EXPECT_TRUE(b.augmenting());
  auto ea = a.epoch(0), eb = b.epoch(0);
  std::size_t altered = 0;
  for (std::size_t i = 0; i < ea.size(); ++i)
    for (std::size_t k = 0; k < ea[i].size(); ++k) {
      EXPECT_EQ(ea[i].labels[k], eb[i].labels[k]);
      altered += !ea[i].images[k].bit_equal(eb[i].images[k]);
    }
  EXPECT_GT(altered, 0u);
  // Different epochs draw different augmentations.
  EXPECT_FALSE(b.epoch(1)[0].images[0].bit_equal(eb[0].images[0]) &&
               b.epoch(1)[0].images[1].bit_equal(eb[0].images[1]) &&
               b.epoch(1)[0].images[2].bit_equal(eb[0].images[2]));
}

TEST(Loader, NormalizedTrainingDataIsCentred) {
  TempDir dir("centred");
  auto m = generate_dataset(small_config(), dir.path);
  LoaderOptions opt;
  opt.dtype = num::DType::f64;
  double sum = 0, count = 0;
  for (const auto& split : {"train", "val"})
    for (const auto& batch : BatchLoader(m, split, opt).epoch(0))
      for (const auto& img : batch.images)
        for (double v : img.to_vector()) sum += v, ++count;
  EXPECT_NEAR(sum / count, 0.0, 1e-9);
}

TEST(Loader, RejectsBadInputs) {
  TempDir dir("loader_bad");
  auto m = generate_dataset(small_config(), dir.path);
  auto unknown = m;
  unknown.records[0].labels = {"surface3d"};
  unknown.records[0].split = "train";
  EXPECT_THROW(BatchLoader(unknown, "train", {}), std::invalid_argument);
  auto missing = m;
  missing.records[0].path = "images/nope.png";
  missing.records[0].split = "train";
  EXPECT_THROW(BatchLoader(missing, "train", {}), ImageError);
  EXPECT_THROW(BatchLoader(m, "test", {}), std::invalid_argument);
}
