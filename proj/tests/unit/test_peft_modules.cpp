#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "plotadapter/numerics/gradcheck.hpp"
#include "plotadapter/peft/model.hpp"

using namespace pa;
using namespace pa::peft;
using num::DType;
using vit::BackboneConfig;

namespace {

BackboneConfig small_config(std::size_t width = 8, std::size_t grid = 2) {
  BackboneConfig c;
  c.patch_size = 4;
  c.image_size = 4 * grid;
  c.width = width;
  c.depth = 3;
  c.heads = 2;
  c.mlp_dim = 16;
  c.num_classes = 3;
  return c;
}

void randomize(const num::ParamList& params, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  for (auto* p : params)
    for (std::size_t i = 0; i < p->value.numel(); ++i) p->value.set(i, rng.uniform(-scale, scale));
}

Tensor random(num::Shape s, std::uint64_t seed) {
  Rng rng(seed);
  return num::uniform_tensor(std::move(s), -1, 1, rng, DType::f64);
}

TokenBatch layout(std::size_t special, std::size_t h, std::size_t w) { return TokenBatch{Var{}, h, w, special}; }

Var weighted(Var y, std::uint64_t seed) {
  Rng rng(seed);
  return num::sum(num::mul(y, y.tape().constant(num::uniform_tensor(y.shape(), 0.5, 1.5, rng, DType::f64))));
}

// ---- Straight-line reference for the default CNN block (3x3 dw, SE, squeeze mixer) ----

using Grid = std::vector<double>;  // [C][H][W]

double p_at(const num::Parameter* p, std::size_t i) { return p->value.at(i); }

Grid ref_block(const CnnBlock& b, const Grid& x0, std::size_t c, std::size_t h, std::size_t w) {
  auto idx = [&](std::size_t ch, std::size_t y, std::size_t x) { return (ch * h + y) * w + x; };
  Grid x1(x0.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double s = p_at(b.dw3_b, ch);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const long yy = static_cast<long>(y) + dy, xx = static_cast<long>(x) + dx;
            if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
            s += p_at(b.dw3, ch * 9 + (dy + 1) * 3 + (dx + 1)) * x0[idx(ch, yy, xx)];
          }
        x1[idx(ch, y, x)] = s + x0[idx(ch, y, x)];
      }
  std::vector<double> pooled(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h * w; ++i) pooled[ch] += x1[ch * h * w + i];
    pooled[ch] /= static_cast<double>(h * w);
  }
  const std::size_t r = b.se1->value.dim(0);
  std::vector<double> hidden(r);
  for (std::size_t j = 0; j < r; ++j) {
    double s = p_at(b.se1_b, j);
    for (std::size_t ch = 0; ch < c; ++ch) s += p_at(b.se1, j * c + ch) * pooled[ch];
    hidden[j] = std::max(0.0, s);
  }
  Grid x2(x1.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = p_at(b.se2_b, ch);
    for (std::size_t j = 0; j < r; ++j) s += p_at(b.se2, ch * r + j) * hidden[j];
    const double gate = 1.0 / (1.0 + std::exp(-s));
    for (std::size_t i = 0; i < h * w; ++i) x2[ch * h * w + i] = x1[ch * h * w + i] * gate;
  }
  const std::size_t m = b.mix1->value.dim(0);
  Grid out(x2.size());
  for (std::size_t i = 0; i < h * w; ++i) {
    std::vector<double> mid(m);
    for (std::size_t j = 0; j < m; ++j) {
      double s = p_at(b.mix1_b, j);
      for (std::size_t ch = 0; ch < c; ++ch) s += p_at(b.mix1, j * c + ch) * x2[ch * h * w + i];
      mid[j] = 0.5 * s * (1.0 + std::erf(s / std::sqrt(2.0)));
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = p_at(b.mix2_b, ch);
      for (std::size_t j = 0; j < m; ++j) s += p_at(b.mix2, ch * m + j) * mid[j];
      out[ch * h * w + i] = s + x2[ch * h * w + i];
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

TEST(Vanilla, ZeroUpProjectionGivesZero) {
  ParamStore store;
  Rng rng(1);
  auto l = VanillaAdapterLayer::create(store, "a.", 8, StrategySpec::vanilla(3), rng, DType::f64);
  num::Tape tape(DType::f64);
  auto y = l.forward(tape, tape.constant(random({5, 8}, 2)));
  for (double v : y.value().to_vector()) EXPECT_EQ(v, 0.0);
}

TEST(Vanilla, ScalarBottleneckByHand) {
  ParamStore store;
  Rng rng(1);
  auto l = VanillaAdapterLayer::create(store, "a.", 2, StrategySpec::vanilla(1), rng, DType::f64);
  l.w_down->value = Tensor::from_values({2, 1}, {1, -1}, DType::f64);
  l.b_down->value = Tensor::from_values({1}, {0.5}, DType::f64);
  l.w_up->value = Tensor::from_values({1, 2}, {2, 3}, DType::f64);
  l.b_up->value = Tensor::from_values({2}, {0.1, 0.2}, DType::f64);
  num::Tape tape(DType::f64);
  auto y = l.forward(tape, tape.constant(Tensor::from_values({2, 2}, {1, 2, 3, 1}, DType::f64)));
  // Row 0: relu(1-2+0.5)=0. Row 1: relu(3-1+0.5)=2.5.
  const std::vector<double> expected{0.1, 0.2, 5.1, 7.7};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y.value().at(i), expected[i], 1e-15);
}

TEST(Vanilla, DownProjectionGradient) {
  ParamStore store;
  Rng rng(1);
  auto l = VanillaAdapterLayer::create(store, "a.", 6, StrategySpec::vanilla(3), rng, DType::f64);
  randomize(store.list(), 3);
  auto x = random({4, 6}, 4);
  auto report = num::check_parameter_gradients(store.list(), [&](num::Tape& t) {
    return weighted(l.forward(t, t.constant(x)), 5);
  });
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst_param;
}

// ---------------------------------------------------------------------------

TEST(CnnBlock, ZeroOutputPathsGiveZeroAdapterOutput) {
  ParamStore store;
  Rng rng(2);
  auto spec = StrategySpec::v1(4);
  CnnBlock block(store, "b.", spec, rng, DType::f64);
  auto up = VanillaAdapterLayer::create(store, "p.", 8, spec, rng, DType::f64);
  num::Tape tape(DType::f64);
  auto z = block.forward_tokens(tape, tape.constant(random({5, 4}, 1)), layout(1, 2, 2));
  for (double v : up.up(tape, z).value().to_vector()) EXPECT_EQ(v, 0.0);
  // Mixer output conv starts at zero.
  for (double v : block.mix2->value.to_vector()) EXPECT_EQ(v, 0.0);
}

TEST(CnnBlock, ZeroSeConvsGiveHalfGate) {
  ParamStore store;
  Rng rng(2);
  CnnBlock block(store, "b.", StrategySpec::v1(4), rng, DType::f64);
  randomize(store.list(), 7);
  for (auto* p : {block.se1, block.se1_b, block.se2, block.se2_b, block.mix2, block.mix2_b}) p->value.fill(0.0);
  auto x0 = random({4, 3, 3}, 3);
  num::Tape tape(DType::f64);
  auto gx = tape.constant(x0);
  auto x1 = num::add(num::depthwise_conv(gx, tape.param(*block.dw3), tape.param(*block.dw3_b)), gx);
  auto out = block.forward_grid(tape, gx);
  for (std::size_t i = 0; i < x0.numel(); ++i) EXPECT_DOUBLE_EQ(out.value().at(i), 0.5 * x1.value().at(i));
}

TEST(CnnBlock, MatchesStraightLineReference) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ParamStore store;
    Rng rng(seed);
    CnnBlock block(store, "b.", StrategySpec::v1(4), rng, DType::f64);
    randomize(store.list(), seed + 10, 0.8);
    auto x0 = random({4, 2, 2}, seed + 20);
    num::Tape tape(DType::f64);
    auto out = block.forward_grid(tape, tape.constant(x0)).value();
    auto ref = ref_block(block, x0.to_vector(), 4, 2, 2);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(out.at(i), ref[i], 1e-12) << "seed " << seed;
  }
}

TEST(CnnBlock, SpecialTokensBypass) {
  ParamStore store;
  Rng rng(2);
  CnnBlock block(store, "b.", StrategySpec::v1(4), rng, DType::f64);
  randomize(store.list(), 8);
  auto z = random({3 + 4, 4}, 9);
  num::Tape tape(DType::f64);
  auto out = block.forward_tokens(tape, tape.constant(z), layout(3, 2, 2)).value();
  for (std::size_t i = 0; i < 3 * 4; ++i) EXPECT_EQ(out.at(i), z.at(i));
  EXPECT_THROW(block.forward_tokens(tape, tape.constant(random({6, 4}, 1)), layout(1, 2, 3)), num::DimensionError);
}

TEST(CnnBlock, DependsOnSpatialArrangement) {
  ParamStore store;
  Rng rng(2);
  CnnBlock block(store, "b.", StrategySpec::v1(4), rng, DType::f64);
  randomize(store.list(), 8);
  const std::size_t n = 9, d = 4;
  auto z = random({n, d}, 10);
  const std::vector<std::size_t> perm{4, 0, 8, 2, 6, 1, 3, 7, 5};
  Tensor zp({n, d}, DType::f64);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) zp.set(i * d + j, z.at(perm[i] * d + j));
  num::Tape tape(DType::f64);
  auto y = block.forward_tokens(tape, tape.constant(z), layout(0, 3, 3)).value();
  auto yp = block.forward_tokens(tape, tape.constant(zp), layout(0, 3, 3)).value();
  double diff = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) diff = std::max(diff, std::abs(yp.at(i * d + j) - y.at(perm[i] * d + j)));
  EXPECT_GT(diff, 1e-3);
}

TEST(CnnBlock, LiteralGateBroadcastsTheGate) {
  auto spec = StrategySpec::v1(4);
  spec.block.literal_gate = true;
  ParamStore store;
  Rng rng(2);
  CnnBlock block(store, "b.", spec, rng, DType::f64);
  randomize(store.list(), 8);
  block.mix2->value.fill(0.0);
  block.mix2_b->value.fill(0.0);
  num::Tape tape(DType::f64);
  auto out = block.forward_grid(tape, tape.constant(random({4, 3, 3}, 2))).value();
  for (std::size_t c = 0; c < 4; ++c) {
    const double g = out.at(c * 9);
    EXPECT_GT(g, 0.0);
    EXPECT_LT(g, 1.0);
    for (std::size_t i = 1; i < 9; ++i) EXPECT_EQ(out.at(c * 9 + i), g);
  }
}

TEST(CnnBlock, EveryVariantPassesGradientCheck) {
  std::size_t configs = 0;
  for (auto tm : {TokenMixer::single, TokenMixer::multiscale, TokenMixer::stacked})
    for (auto at : {ReAttention::se, ReAttention::sa})
      for (auto cm : {ChannelMixer::squeeze, ChannelMixer::expand, ChannelMixer::single})
        for (bool literal : {false, true}) {
          auto spec = StrategySpec::v1(4);
          spec.block = {tm, at, cm, literal, num::Activation::relu};
          ParamStore store;
          Rng rng(configs + 1);
          CnnBlock block(store, "b.", spec, rng, DType::f64);
          randomize(store.list(), configs + 100);
          auto z = random({1 + 9, 4}, configs + 200);
          num::GradCheckOptions opt;
          opt.max_elements_per_param = 12;
          opt.seed = configs;
          auto report = num::check_parameter_gradients(
              store.list(),
              [&](num::Tape& t) { return weighted(block.forward_tokens(t, t.constant(z), layout(1, 3, 3)), 3); },
              opt);
          EXPECT_LT(report.max_rel_error, 1e-4) << "config " << configs << " " << report.worst_param;
          ++configs;
        }
  EXPECT_GE(configs, 10u);
}

// ---------------------------------------------------------------------------

TEST(Shared, NeutralRescaleGivesPlainProjection) {
  ParamStore store;
  Rng rng(3);
  SharedProjectionBank bank(store, 6, 2, StrategySpec::v2(3), rng, DType::f64);
  bank.terms(1).c_down->value.fill(1.0);
  auto x = random({4, 6}, 1);
  num::Tape tape(DType::f64);
  auto down = bank.down(tape, tape.constant(x), 1).value();
  auto plain = num::matmul(tape.constant(x), tape.param(bank.shared())).value();
  EXPECT_TRUE(down.bit_equal(plain));
  EXPECT_THROW(bank.down(tape, tape.constant(x), 2), std::out_of_range);
}

TEST(Shared, UpUsesTransposedSharedMatrix) {
  ParamStore store;
  Rng rng(3);
  SharedProjectionBank bank(store, 3, 1, StrategySpec::v2(2), rng, DType::f64);
  bank.shared().value = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6}, DType::f64);
  const auto& t = bank.terms(0);
  t.c_up->value = Tensor::from_values({3}, {1, 10, 100}, DType::f64);
  t.b_up->value = Tensor::from_values({3}, {0.5, 0.5, 0.5}, DType::f64);
  num::Tape tape(DType::f64);
  // z = [1, -1]; z W_s^T = [1-2, 3-4, 5-6] = [-1,-1,-1]; rescaled [-1,-10,-100]; plus bias.
  auto y = bank.up(tape, tape.constant(Tensor::from_values({1, 2}, {1, -1}, DType::f64)), 0).value();
  EXPECT_DOUBLE_EQ(y.at(0), -0.5);
  EXPECT_DOUBLE_EQ(y.at(1), -9.5);
  EXPECT_DOUBLE_EQ(y.at(2), -99.5);
}

TEST(Shared, SharingConsistencyAndSensitivity) {
  auto c = small_config(8, 2);
  auto spec = StrategySpec::v2(4);
  Strategy s(spec, c, DType::f64, 5);
  randomize(s.parameters(), 6);
  auto x = random({5, 8}, 7);
  const auto lay = layout(1, 2, 2);

  auto outputs = [&] {
    std::vector<Tensor> out;
    num::Tape tape(DType::f64);
    for (std::size_t l = 0; l < c.depth; ++l) out.push_back(s.adapter(tape, tape.constant(x), lay, l)->value());
    return out;
  };

  // Make every layer identical: same block weights and rescales.
  auto copy_layer0 = [&] {
    for (std::size_t l = 1; l < c.depth; ++l) {
      const auto& src = s.block(0).parameters();
      const auto& dst = s.block(l).parameters();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
      const auto& t0 = s.shared()->terms(0);
      const auto& tl = s.shared()->terms(l);
      tl.c_down->value = t0.c_down->value;
      tl.b_down->value = t0.b_down->value;
      tl.c_up->value = t0.c_up->value;
      tl.b_up->value = t0.b_up->value;
    }
  };
  copy_layer0();
  auto same = outputs();
  for (std::size_t l = 1; l < c.depth; ++l) EXPECT_TRUE(same[l].bit_equal(same[0]));

  auto base = outputs();
  s.shared()->shared().value.set(3, s.shared()->shared().value.at(3) + 0.05);
  auto after_ws = outputs();
  for (std::size_t l = 0; l < c.depth; ++l) EXPECT_GT(num::max_abs_diff(after_ws[l], base[l]), 1e-6) << l;

  base = after_ws;
  auto* cd = s.shared()->terms(1).c_down;
  cd->value.set(0, cd->value.at(0) + 0.05);
  auto after_c = outputs();
  EXPECT_TRUE(after_c[0].bit_equal(base[0]));
  EXPECT_GT(num::max_abs_diff(after_c[1], base[1]), 1e-6);
  EXPECT_TRUE(after_c[2].bit_equal(base[2]));
}

TEST(Shared, OneSharedMatrixPerModel) {
  Strategy s(StrategySpec::v2(4), small_config(), DType::f32, 1);
  std::size_t shared = 0;
  for (auto* p : s.parameters())
    if (p->name == "shared.weight") ++shared;
  EXPECT_EQ(shared, 1u);
  EXPECT_EQ(s.shared()->layers(), 3u);
}

// ---------------------------------------------------------------------------

TEST(Prompts, InjectAndReplace) {
  ParamStore store;
  Rng rng(1);
  PromptBank bank(store, 3, 2, 4, 4, rng, DType::f64);
  auto x = random({1 + 4, 4}, 2);
  num::Tape tape(DType::f64);
  TokenBatch tb{tape.constant(x), 2, 2, 1};
  auto a = bank.inject(tape, tb, 0);
  EXPECT_EQ(a.n_special, 3u);
  EXPECT_EQ(a.tokens.dim(0), 7u);
  auto b = bank.inject(tape, a, 1);
  EXPECT_EQ(b.tokens.dim(0), 7u);
  const auto& bv = b.tokens.value();
  const auto& p1 = bank.layer_prompts(1).value;
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(bv.at(j), x.at(j));  // CLS kept
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(bv.at(4 + i), p1.at(i));
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(bv.at(12 + i), x.at(4 + i));  // patches untouched

  ParamStore empty_store;
  PromptBank none(empty_store, 3, 0, 4, 4, rng, DType::f64);
  auto same = none.inject(tape, tb, 0);
  EXPECT_EQ(same.tokens.id(), tb.tokens.id());
  EXPECT_EQ(empty_store.size(), 0u);
}

TEST(Prompts, InitialisationBound) {
  ParamStore store;
  Rng rng(1);
  PromptBank bank(store, 2, 8, 64, 8, rng, DType::f64);
  const double bound = std::sqrt(6.0 / (3 * 64 + 64));
  for (double v : bank.layer_prompts(0).value.to_vector()) EXPECT_LE(std::abs(v), bound);
}

// ---------------------------------------------------------------------------

TEST(AdapterPaths, StrategyBranchesPassGradientCheck) {
  std::size_t configs = 0;
  for (auto kind : {Kind::vanilla_adapter, Kind::plot_adapter_v1, Kind::plot_adapter_v2}) {
    for (std::size_t d : {2u, 4u, 6u, 8u}) {
      auto spec = StrategySpec::of(kind, d);
      spec.se_reduction = 2;
      auto c = small_config(8, 2 + d % 3);
      Strategy s(spec, c, DType::f64, d);
      randomize(s.parameters(), d + 40);
      const std::size_t n = 1 + c.grid() * c.grid();
      auto x = random({n, 8}, d + 50);
      const auto lay = layout(1, c.grid(), c.grid());
      const std::size_t layer = d % c.depth;
      num::GradCheckOptions opt;
      opt.max_elements_per_param = 8;
      opt.seed = d;
      auto report = num::check_parameter_gradients(
          s.parameters(), [&](num::Tape& t) { return weighted(*s.adapter(t, t.constant(x), lay, layer), 11); }, opt);
      EXPECT_LT(report.max_rel_error, 1e-4) << spec.label() << " " << report.worst_param;
      ++configs;
    }
  }
  EXPECT_GE(configs, 10u);
}
