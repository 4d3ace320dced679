#include "plotadapter/backbone/vit.hpp"

#include <cmath>

#include "plotadapter/backbone/checkpoint.hpp"
#include "plotadapter/numerics/rng.hpp"

namespace pa::vit {

namespace {

Tensor xavier(std::size_t fan_in, std::size_t fan_out, num::Rng& rng, DType dtype) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return num::uniform_tensor({fan_in, fan_out}, -bound, bound, rng, dtype);
}

}  // namespace

Backbone::Backbone(BackboneConfig config, DType dtype, std::uint64_t seed) : config_(config), dtype_(dtype) {
  config_.validate();
  num::Rng rng(seed);
  const std::size_t d = config_.width;
  patch_weight_ = &store_.create("patch_embed.weight", xavier(config_.patch_dim(), d, rng, dtype));
  patch_bias_ = &store_.create("patch_embed.bias", Tensor({d}, dtype));
  cls_token_ = &store_.create("cls_token", num::normal_tensor({1, d}, 0.02, rng, dtype));
  pos_embed_ = &store_.create("pos_embed", num::normal_tensor({config_.num_patches() + 1, d}, 0.02, rng, dtype));

  for (std::size_t i = 0; i < config_.depth; ++i) {
    const std::string p = "blocks." + std::to_string(i) + ".";
    EncoderLayer l{};
    l.ln1_gamma = &store_.create(p + "norm1.weight", Tensor::full({d}, 1.0, dtype));
    l.ln1_beta = &store_.create(p + "norm1.bias", Tensor({d}, dtype));
    l.qkv_weight = &store_.create(p + "attn.qkv.weight", xavier(d, 3 * d, rng, dtype));
    l.qkv_bias = &store_.create(p + "attn.qkv.bias", Tensor({3 * d}, dtype));
    l.proj_weight = &store_.create(p + "attn.proj.weight", xavier(d, d, rng, dtype));
    l.proj_bias = &store_.create(p + "attn.proj.bias", Tensor({d}, dtype));
    l.ln2_gamma = &store_.create(p + "norm2.weight", Tensor::full({d}, 1.0, dtype));
    l.ln2_beta = &store_.create(p + "norm2.bias", Tensor({d}, dtype));
    l.fc1_weight = &store_.create(p + "mlp.fc1.weight", xavier(d, config_.mlp_dim, rng, dtype));
    l.fc1_bias = &store_.create(p + "mlp.fc1.bias", Tensor({config_.mlp_dim}, dtype));
    l.fc2_weight = &store_.create(p + "mlp.fc2.weight", xavier(config_.mlp_dim, d, rng, dtype));
    l.fc2_bias = &store_.create(p + "mlp.fc2.bias", Tensor({d}, dtype));
    layers_.push_back(l);
  }
  norm_gamma_ = &store_.create("norm.weight", Tensor::full({d}, 1.0, dtype));
  norm_beta_ = &store_.create("norm.bias", Tensor({d}, dtype));
}

void Backbone::set_trainable(bool on) const {
  for (auto* p : parameters()) p->set_trainable(on);
}

std::string Backbone::content_hash() const { return parameters_hash(parameters()); }

ClassifierHead::ClassifierHead(std::size_t width, std::size_t num_classes, DType dtype) {
  weight_ = &store_.create("head.weight", Tensor({width, num_classes}, dtype));
  bias_ = &store_.create("head.bias", Tensor({num_classes}, dtype));
}

TokenBatch LayerHooks::before_layer(Tape&, TokenBatch x, std::size_t) const { return x; }

std::optional<Var> LayerHooks::adapter(Tape&, Var, const TokenBatch&, std::size_t) const { return std::nullopt; }

Tensor patchify(const Tensor& image, std::size_t patch_size) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw num::DimensionError("patchify expects a [3,H,W] image, got " + num::shape_str(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2), p = patch_size;
  if (h % p != 0 || w % p != 0) throw num::DimensionError("image extents are not multiples of the patch size");
  const std::size_t gh = h / p, gw = w / p, row = 3 * p * p;
  Tensor out({gh * gw, row}, image.dtype());
  num::dispatch(image.dtype(), [&]<class T>() {
    auto src = image.data<T>();
    auto dst = out.data<T>();
    for (std::size_t gy = 0; gy < gh; ++gy)
      for (std::size_t gx = 0; gx < gw; ++gx) {
        T* r = dst.data() + (gy * gw + gx) * row;
        for (std::size_t c = 0; c < 3; ++c)
          for (std::size_t py = 0; py < p; ++py)
            for (std::size_t px = 0; px < p; ++px)
              *r++ = src[(c * h + gy * p + py) * w + gx * p + px];
      }
  });
  return out;
}

TokenBatch patch_embed(Tape& tape, const Backbone& backbone, const Tensor& image) {
  const auto& cfg = backbone.config();
  if (image.rank() != 3 || image.dim(1) != cfg.image_size || image.dim(2) != cfg.image_size) {
    throw num::DimensionError("patch_embed: expected [3," + std::to_string(cfg.image_size) + "," +
                              std::to_string(cfg.image_size) + "] image, got " + num::shape_str(image.shape()));
  }
  Var patches = tape.constant(patchify(image.dtype() == backbone.dtype() ? image : image.cast(backbone.dtype()),
                                       cfg.patch_size));
  Var embedded = num::affine(patches, tape.param(backbone.patch_weight()), tape.param(backbone.patch_bias()));
  std::vector<Var> rows{tape.param(backbone.cls_token()), embedded};
  Var tokens = num::add(num::concat_rows(rows), tape.param(backbone.pos_embed()));
  return TokenBatch{tokens, cfg.grid(), cfg.grid(), 1};
}

TokenBatch mhsa_forward(Tape& tape, const EncoderLayer& layer, const TokenBatch& x, std::size_t heads, double ln_eps) {
  const std::size_t d = x.tokens.dim(1);
  if (heads == 0 || d % heads != 0) throw num::DimensionError("mhsa: width not divisible by heads");
  const std::size_t dk = d / heads;
  Var xn = num::layer_norm(x.tokens, tape.param(*layer.ln1_gamma), tape.param(*layer.ln1_beta), ln_eps);
  Var qkv = num::affine(xn, tape.param(*layer.qkv_weight), tape.param(*layer.qkv_bias));
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var q = num::slice_cols(qkv, h * dk, dk);
    Var k = num::slice_cols(qkv, d + h * dk, dk);
    Var v = num::slice_cols(qkv, 2 * d + h * dk, dk);
    Var attn = num::softmax(num::scale(num::matmul_nt(q, k), inv_sqrt_dk));
    outs.push_back(num::matmul(attn, v));
  }
  Var merged = heads == 1 ? outs.front() : num::concat_cols(outs);
  Var projected = num::affine(merged, tape.param(*layer.proj_weight), tape.param(*layer.proj_bias));
  TokenBatch out = x;
  out.tokens = num::add(x.tokens, projected);
  return out;
}

TokenBatch encoder_forward(Tape& tape, const EncoderLayer& layer, const TokenBatch& x, std::size_t heads,
                           double ln_eps, const AdapterFn& adapter, double influence) {
  TokenBatch attended = mhsa_forward(tape, layer, x, heads, ln_eps);
  Var xn = num::layer_norm(attended.tokens, tape.param(*layer.ln2_gamma), tape.param(*layer.ln2_beta), ln_eps);
  Var hidden = num::gelu(num::affine(xn, tape.param(*layer.fc1_weight), tape.param(*layer.fc1_bias)));
  Var mlp = num::affine(hidden, tape.param(*layer.fc2_weight), tape.param(*layer.fc2_bias));
  TokenBatch out = attended;
  out.tokens = num::add(attended.tokens, mlp);
  if (adapter) {
    Var xa = adapter(tape, xn, attended);
    if (xa.shape() != out.tokens.shape()) {
      throw num::DimensionError("adapter output " + num::shape_str(xa.shape()) + " does not match tokens " +
                                num::shape_str(out.tokens.shape()));
    }
    out.tokens = num::add(out.tokens, num::scale(xa, influence));
  }
  return out;
}

TokenBatch encoder_forward(Tape& tape, const Backbone& backbone, std::size_t index, const TokenBatch& x,
                           const LayerHooks* hooks) {
  const auto& cfg = backbone.config();
  if (!hooks) return encoder_forward(tape, backbone.layer(index), x, cfg.heads, cfg.ln_eps);
  const double s = hooks->influence();

  TokenBatch attended = mhsa_forward(tape, backbone.layer(index), x, cfg.heads, cfg.ln_eps);
  const auto& layer = backbone.layer(index);
  Var xn = num::layer_norm(attended.tokens, tape.param(*layer.ln2_gamma), tape.param(*layer.ln2_beta), cfg.ln_eps);
  Var hidden = num::gelu(num::affine(xn, tape.param(*layer.fc1_weight), tape.param(*layer.fc1_bias)));
  Var mlp = num::affine(hidden, tape.param(*layer.fc2_weight), tape.param(*layer.fc2_bias));
  TokenBatch out = attended;
  out.tokens = num::add(attended.tokens, mlp);
  if (auto xa = hooks->adapter(tape, xn, attended, index)) {
    if (xa->shape() != out.tokens.shape()) {
      throw num::DimensionError("adapter output " + num::shape_str(xa->shape()) + " does not match tokens " +
                                num::shape_str(out.tokens.shape()));
    }
    out.tokens = num::add(out.tokens, num::scale(*xa, s));
  }
  return out;
}

Var cls_features(Tape& tape, const Backbone& backbone, const Tensor& image, const LayerHooks* hooks) {
  TokenBatch x = patch_embed(tape, backbone, image);
  for (std::size_t i = 0; i < backbone.config().depth; ++i) {
    if (hooks) x = hooks->before_layer(tape, x, i);
    x = encoder_forward(tape, backbone, i, x, hooks);
  }
  Var cls = num::slice_rows(x.tokens, 0, 1);
  return num::layer_norm(cls, tape.param(backbone.norm_gamma()), tape.param(backbone.norm_beta()),
                         backbone.config().ln_eps);
}

Var backbone_forward(Tape& tape, const Backbone& backbone, const Tensor& image, const ClassifierHead& head,
                     const LayerHooks* hooks) {
  if (head.weight().value.dim(0) != backbone.config().width) {
    throw num::DimensionError("classifier head width does not match backbone width");
  }
  Var features = cls_features(tape, backbone, image, hooks);
  return num::affine(features, tape.param(head.weight()), tape.param(head.bias()));
}

}  // namespace pa::vit
