#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "plotadapter/backbone/config.hpp"
#include "plotadapter/numerics/ops.hpp"
#include "plotadapter/numerics/parameter.hpp"

namespace pa::vit {

using num::DType;
using num::Parameter;
using num::Tape;
using num::Tensor;
using num::Var;

/// Token matrix [N_special + N_patch, D] for one image. Special tokens (CLS,
/// then any prompts) always precede the patch tokens.
struct TokenBatch {
  Var tokens;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::size_t n_special = 1;

  std::size_t num_patches() const { return grid_h * grid_w; }
  std::size_t num_tokens() const { return n_special + num_patches(); }
};

struct EncoderLayer {
  Parameter* ln1_gamma;
  Parameter* ln1_beta;
  Parameter* qkv_weight;  // [D, 3D]
  Parameter* qkv_bias;
  Parameter* proj_weight;  // [D, D]
  Parameter* proj_bias;
  Parameter* ln2_gamma;
  Parameter* ln2_beta;
  Parameter* fc1_weight;  // [D, mlp_dim]
  Parameter* fc1_bias;
  Parameter* fc2_weight;  // [mlp_dim, D]
  Parameter* fc2_bias;
};

/// Pre-norm ViT: patch embedding, CLS token, learned positions, L encoder
/// layers and a final LayerNorm. The classifier head lives separately so one
/// backbone can serve several catalogs.
class Backbone {
 public:
  Backbone(BackboneConfig config, DType dtype, std::uint64_t seed);
  Backbone(const Backbone&) = delete;
  Backbone& operator=(const Backbone&) = delete;

  const BackboneConfig& config() const { return config_; }
  DType dtype() const { return dtype_; }

  num::ParamList parameters() const { return store_.list(); }
  Parameter* find(const std::string& name) const { return store_.find(name); }
  const EncoderLayer& layer(std::size_t i) const { return layers_.at(i); }

  Parameter& patch_weight() const { return *patch_weight_; }  // [3p^2, D]
  Parameter& patch_bias() const { return *patch_bias_; }
  Parameter& cls_token() const { return *cls_token_; }  // [1, D]
  Parameter& pos_embed() const { return *pos_embed_; }  // [1 + N_patch, D]
  Parameter& norm_gamma() const { return *norm_gamma_; }
  Parameter& norm_beta() const { return *norm_beta_; }

  void set_trainable(bool on) const;

  /// SHA-256 (hex) over every parameter's name, dtype, shape and bytes.
  std::string content_hash() const;

 private:
  BackboneConfig config_;
  DType dtype_;
  num::ParamStore store_;
  std::vector<EncoderLayer> layers_;
  Parameter* patch_weight_ = nullptr;
  Parameter* patch_bias_ = nullptr;
  Parameter* cls_token_ = nullptr;
  Parameter* pos_embed_ = nullptr;
  Parameter* norm_gamma_ = nullptr;
  Parameter* norm_beta_ = nullptr;
};

/// Affine map from the final CLS token to m logits.
class ClassifierHead {
 public:
  ClassifierHead(std::size_t width, std::size_t num_classes, DType dtype);

  Parameter& weight() const { return *weight_; }  // [D, m]
  Parameter& bias() const { return *bias_; }
  std::size_t num_classes() const { return bias_->value.numel(); }
  num::ParamList parameters() const { return store_.list(); }

 private:
  num::ParamStore store_;
  Parameter* weight_;
  Parameter* bias_;
};

/// Per-forward extension points used by fine-tuning strategies.
class LayerHooks {
 public:
  virtual ~LayerHooks() = default;
  /// Runs before layer `layer` sees the tokens (prompt injection).
  virtual TokenBatch before_layer(Tape& tape, TokenBatch x, std::size_t layer) const;
  /// Adapter branch X_a computed from the normalized tokens feeding the MLP.
  virtual std::optional<Var> adapter(Tape& tape, Var x_norm, const TokenBatch& x, std::size_t layer) const;
  /// Influence factor s scaling the adapter branch.
  virtual double influence() const { return 0.0; }
};

/// Flattens a [3,H,W] image into [N_patch, 3p^2] rows, channel-major per patch.
Tensor patchify(const Tensor& image, std::size_t patch_size);

TokenBatch patch_embed(Tape& tape, const Backbone& backbone, const Tensor& image);

/// Pre-norm multi-head self-attention with residual.
TokenBatch mhsa_forward(Tape& tape, const EncoderLayer& layer, const TokenBatch& x, std::size_t heads, double ln_eps);

/// Computes X_a from LN(X) and the token layout.
using AdapterFn = std::function<Var(Tape&, Var x_norm, const TokenBatch& x)>;

/// One encoder layer: MHSA, then X' = MLP(LN(X)) + s*X_a + X.
TokenBatch encoder_forward(Tape& tape, const EncoderLayer& layer, const TokenBatch& x, std::size_t heads,
                           double ln_eps, const AdapterFn& adapter = {}, double influence = 0.0);

/// Same layer with the adapter supplied by hooks (called on LN(X)).
TokenBatch encoder_forward(Tape& tape, const Backbone& backbone, std::size_t index, const TokenBatch& x,
                           const LayerHooks* hooks);

/// Full image -> [1, m] logits through the CLS token.
Var backbone_forward(Tape& tape, const Backbone& backbone, const Tensor& image, const ClassifierHead& head,
                     const LayerHooks* hooks = nullptr);

/// Final CLS feature [1, D] after the last norm.
Var cls_features(Tape& tape, const Backbone& backbone, const Tensor& image, const LayerHooks* hooks = nullptr);

}  // namespace pa::vit
