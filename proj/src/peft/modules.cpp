#include "plotadapter/peft/modules.hpp"

#include <cmath>
#include <stdexcept>

namespace pa::peft {

namespace {

Tensor uniform(num::Shape shape, double bound, Rng& rng, DType dtype) {
  return num::uniform_tensor(std::move(shape), -bound, bound, rng, dtype);
}

Tensor init_vector(InitMode mode, std::size_t n, double bound, Rng& rng, DType dtype) {
  return mode == InitMode::uniform ? uniform({n}, bound, rng, dtype) : Tensor({n}, dtype);
}

}  // namespace

double init_bound(const StrategySpec& spec, std::size_t fan_in) {
  return spec.init_bound > 0 ? spec.init_bound : 1.0 / std::sqrt(static_cast<double>(fan_in));
}

// ---------------------------------------------------------------------------

VanillaAdapterLayer VanillaAdapterLayer::create(ParamStore& store, const std::string& prefix, std::size_t width,
                                                const StrategySpec& spec, Rng& rng, DType dtype) {
  const std::size_t d = spec.dim;
  VanillaAdapterLayer l;
  l.activation = spec.vanilla_activation;
  l.w_down = &store.create(prefix + "down.weight", uniform({width, d}, init_bound(spec, width), rng, dtype));
  l.b_down = &store.create(prefix + "down.bias", Tensor({d}, dtype));
  l.w_up = &store.create(prefix + "up.weight", Tensor({d, width}, dtype));
  l.b_up = &store.create(prefix + "up.bias", Tensor({width}, dtype));
  return l;
}

Var VanillaAdapterLayer::down(Tape& tape, Var x) const {
  return num::affine(x, tape.param(*w_down), tape.param(*b_down));
}

Var VanillaAdapterLayer::up(Tape& tape, Var z) const { return num::affine(z, tape.param(*w_up), tape.param(*b_up)); }

Var VanillaAdapterLayer::forward(Tape& tape, Var x) const { return up(tape, num::activation(activation, down(tape, x))); }

// ---------------------------------------------------------------------------

Parameter* CnnBlock::add(ParamStore& store, const std::string& name, Tensor value) {
  Parameter* p = &store.create(name, std::move(value));
  params_.push_back(p);
  return p;
}

CnnBlock::CnnBlock(ParamStore& store, const std::string& prefix, const StrategySpec& spec, Rng& rng, DType dtype)
    : variant_(spec.block) {
  const std::size_t d = spec.dim;
  auto kernels = [&](const std::string& name, std::size_t k) {
    return add(store, prefix + name, uniform({d, k, k}, init_bound(spec, k * k), rng, dtype));
  };
  auto zeros = [&](const std::string& name, num::Shape shape) { return add(store, prefix + name, Tensor(shape, dtype)); };

  dw3 = kernels("token.dw3.weight", 3);
  dw3_b = zeros("token.dw3.bias", {d});
  if (variant_.token_mixer == TokenMixer::stacked) {
    dw_extra = kernels("token.dw3b.weight", 3);
    dw_extra_b = zeros("token.dw3b.bias", {d});
  } else if (variant_.token_mixer == TokenMixer::multiscale) {
    dw_extra = kernels("token.dw5.weight", 5);
    dw_extra_b = zeros("token.dw5.bias", {d});
    dw7 = kernels("token.dw7.weight", 7);
    dw7_b = zeros("token.dw7.bias", {d});
  }

  if (variant_.attention == ReAttention::se) {
    const std::size_t h = se_hidden(spec);
    se1 = add(store, prefix + "se.reduce.weight", uniform({h, d}, init_bound(spec, d), rng, dtype));
    se1_b = zeros("se.reduce.bias", {h});
    se2 = add(store, prefix + "se.expand.weight", uniform({d, h}, init_bound(spec, h), rng, dtype));
    se2_b = zeros("se.expand.bias", {d});
  } else {
    sa = add(store, prefix + "sa.weight", uniform({1, 2, 7, 7}, init_bound(spec, 2 * 49), rng, dtype));
    sa_b = zeros("sa.bias", {1});
  }

  if (variant_.channel_mixer == ChannelMixer::single) {
    mix2 = zeros("mixer.weight", {d, d});
    mix2_b = zeros("mixer.bias", {d});
  } else {
    const std::size_t h = mixer_hidden(spec);
    mix1 = add(store, prefix + "mixer.fc1.weight", uniform({h, d}, init_bound(spec, d), rng, dtype));
    mix1_b = zeros("mixer.fc1.bias", {h});
    mix2 = zeros("mixer.fc2.weight", {d, h});
    mix2_b = zeros("mixer.fc2.bias", {d});
  }
}

Var CnnBlock::forward_grid(Tape& tape, Var x0) const {
  auto P = [&](Parameter* p) { return tape.param(*p); };

  Var mixed = num::depthwise_conv(x0, P(dw3), P(dw3_b));
  switch (variant_.token_mixer) {
    case TokenMixer::single: break;
    case TokenMixer::stacked: mixed = num::depthwise_conv(mixed, P(dw_extra), P(dw_extra_b)); break;
    case TokenMixer::multiscale:
      mixed = num::add(num::add(mixed, num::depthwise_conv(x0, P(dw_extra), P(dw_extra_b))),
                       num::depthwise_conv(x0, P(dw7), P(dw7_b)));
      break;
  }
  Var x1 = num::add(mixed, x0);

  Var x2;
  if (variant_.attention == ReAttention::se) {
    Var s = num::pointwise_conv(num::global_avg_pool(x1), P(se1), P(se1_b));
    Var gate = num::sigmoid(num::pointwise_conv(num::activation(variant_.se_activation, s), P(se2), P(se2_b)));
    Var base = variant_.literal_gate ? tape.constant(Tensor::full(x1.shape(), 1.0, tape.dtype())) : x1;
    x2 = num::mul_channel_gate(base, gate);
  } else {
    const std::size_t h = x1.dim(1), w = x1.dim(2);
    std::vector<Var> maps{num::reshape(num::channel_mean(x1), {1, h * w}),
                          num::reshape(num::channel_max(x1), {1, h * w})};
    Var pooled = num::reshape(num::concat_rows(maps), {2, h, w});
    Var gate = num::sigmoid(num::conv2d(pooled, P(sa), P(sa_b)));
    Var base = variant_.literal_gate ? tape.constant(Tensor::full(x1.shape(), 1.0, tape.dtype())) : x1;
    x2 = num::mul_spatial_gate(base, gate);
  }

  Var mixed_channels = mix1 ? num::pointwise_conv(num::gelu(num::pointwise_conv(x2, P(mix1), P(mix1_b))), P(mix2),
                                                  P(mix2_b))
                            : num::pointwise_conv(x2, P(mix2), P(mix2_b));
  return num::add(mixed_channels, x2);
}

Var CnnBlock::forward_tokens(Tape& tape, Var z, const TokenBatch& layout) const {
  const std::size_t ns = layout.n_special, n = layout.num_patches(), d = z.dim(1);
  if (z.dim(0) != ns + n || n == 0) {
    throw num::DimensionError("CNN block: " + std::to_string(z.dim(0)) + " tokens do not form " +
                              std::to_string(ns) + " special tokens plus a " + std::to_string(layout.grid_h) + "x" +
                              std::to_string(layout.grid_w) + " grid");
  }
  Var patches = ns == 0 ? z : num::slice_rows(z, ns, n);
  Var grid = num::reshape(num::transpose(patches), {d, layout.grid_h, layout.grid_w});
  Var out = num::transpose(num::reshape(forward_grid(tape, grid), {d, n}));
  if (ns == 0) return out;
  std::vector<Var> parts{num::slice_rows(z, 0, ns), out};
  return num::concat_rows(parts);
}

// ---------------------------------------------------------------------------

SharedProjectionBank::SharedProjectionBank(ParamStore& store, std::size_t width, std::size_t layers,
                                           const StrategySpec& spec, Rng& rng, DType dtype) {
  const std::size_t d = spec.dim;
  shared_ = &store.create("shared.weight", uniform({width, d}, init_bound(spec, width), rng, dtype));
  const double b = init_bound(spec, d);
  const auto& init = spec.shared_init;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = "shared." + std::to_string(l) + ".";
    LayerTerms t{};
    t.c_down = &store.create(p + "down.rescale", init_vector(init.down_rescale, d, b, rng, dtype));
    t.b_down = &store.create(p + "down.bias", init_vector(init.down_bias, d, b, rng, dtype));
    t.c_up = &store.create(p + "up.rescale", init_vector(init.up_rescale, width, b, rng, dtype));
    t.b_up = &store.create(p + "up.bias", init_vector(init.up_bias, width, b, rng, dtype));
    terms_.push_back(t);
  }
}

const SharedProjectionBank::LayerTerms& SharedProjectionBank::terms(std::size_t layer) const {
  if (layer >= terms_.size()) throw std::out_of_range("shared projection: layer " + std::to_string(layer));
  return terms_[layer];
}

Var SharedProjectionBank::down(Tape& tape, Var x, std::size_t layer) const {
  const auto& t = terms(layer);
  return num::add_row_bias(num::mul_cols(num::matmul(x, tape.param(*shared_)), tape.param(*t.c_down)),
                           tape.param(*t.b_down));
}

Var SharedProjectionBank::up(Tape& tape, Var z, std::size_t layer) const {
  const auto& t = terms(layer);
  return num::add_row_bias(num::mul_cols(num::matmul_nt(z, tape.param(*shared_)), tape.param(*t.c_up)),
                           tape.param(*t.b_up));
}

// ---------------------------------------------------------------------------

PromptBank::PromptBank(ParamStore& store, std::size_t layers, std::size_t prompts, std::size_t width,
                       std::size_t patch_size, Rng& rng, DType dtype)
    : prompts_(prompts) {
  if (prompts == 0) return;
  const double bound = std::sqrt(6.0 / static_cast<double>(3 * patch_size * patch_size + width));
  for (std::size_t l = 0; l < layers; ++l)
    tokens_.push_back(&store.create("prompt." + std::to_string(l), uniform({prompts, width}, bound, rng, dtype)));
}

TokenBatch PromptBank::inject(Tape& tape, TokenBatch x, std::size_t layer) const {
  if (prompts_ == 0) return x;
  const std::size_t n = x.num_patches();
  std::vector<Var> parts{num::slice_rows(x.tokens, 0, 1), tape.param(*tokens_.at(layer)),
                         num::slice_rows(x.tokens, x.n_special, n)};
  x.tokens = num::concat_rows(parts);
  x.n_special = 1 + prompts_;
  return x;
}

}  // namespace pa::peft
