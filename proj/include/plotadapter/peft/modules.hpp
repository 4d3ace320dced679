#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "plotadapter/backbone/vit.hpp"
#include "plotadapter/numerics/rng.hpp"
#include "plotadapter/peft/spec.hpp"

namespace pa::peft {

using num::DType;
using num::Parameter;
using num::ParamStore;
using num::Rng;
using num::Tape;
using num::Tensor;
using num::Var;
using vit::TokenBatch;

/// Uniform initialiser half-width: the explicit bound when set, else 1/sqrt(fan_in).
double init_bound(const StrategySpec& spec, std::size_t fan_in);

/// Bottleneck with private projections: act(x W_down + b_down) W_up + b_up.
struct VanillaAdapterLayer {
  Parameter* w_down = nullptr;  // [D, D']
  Parameter* b_down = nullptr;  // [D']
  Parameter* w_up = nullptr;    // [D', D]
  Parameter* b_up = nullptr;    // [D]
  num::Activation activation = num::Activation::relu;

  static VanillaAdapterLayer create(ParamStore& store, const std::string& prefix, std::size_t width,
                                    const StrategySpec& spec, Rng& rng, DType dtype);

  Var down(Tape& tape, Var x) const;
  Var up(Tape& tape, Var z) const;
  /// Full vanilla pipeline on [N, D] tokens.
  Var forward(Tape& tape, Var x) const;
};

/// Token mixer, re-attention and channel mixer over a D' x H x W grid.
class CnnBlock {
 public:
  CnnBlock(ParamStore& store, const std::string& prefix, const StrategySpec& spec, Rng& rng, DType dtype);

  /// [D', H, W] -> [D', H, W].
  Var forward_grid(Tape& tape, Var grid) const;
  /// [N, D'] tokens laid out as `layout`; special rows pass through untouched.
  Var forward_tokens(Tape& tape, Var z, const TokenBatch& layout) const;

  const BlockVariant& variant() const { return variant_; }
  /// Parameters of this block in creation order.
  const std::vector<Parameter*>& parameters() const { return params_; }

  // Token mixer
  Parameter* dw3 = nullptr;    // [D',3,3]
  Parameter* dw3_b = nullptr;
  Parameter* dw_extra = nullptr;    // stacked: second 3x3; multiscale: 5x5
  Parameter* dw_extra_b = nullptr;
  Parameter* dw7 = nullptr;    // multiscale only
  Parameter* dw7_b = nullptr;
  // Re-attention
  Parameter* se1 = nullptr;    // [h, D']
  Parameter* se1_b = nullptr;
  Parameter* se2 = nullptr;    // [D', h]
  Parameter* se2_b = nullptr;
  Parameter* sa = nullptr;     // [1, 2, 7, 7]
  Parameter* sa_b = nullptr;
  // Channel mixer (mix1 is null for the single-conv mixer)
  Parameter* mix1 = nullptr;
  Parameter* mix1_b = nullptr;
  Parameter* mix2 = nullptr;   // zero-initialised output conv
  Parameter* mix2_b = nullptr;

 private:
  Parameter* add(ParamStore& store, const std::string& name, Tensor value);

  BlockVariant variant_;
  std::vector<Parameter*> params_;
};

/// One D x D' matrix shared by every layer plus per-layer rescale vectors and biases.
class SharedProjectionBank {
 public:
  struct LayerTerms {
    Parameter* c_down;  // [D']
    Parameter* b_down;  // [D']
    Parameter* c_up;    // [D]
    Parameter* b_up;    // [D]
  };

  SharedProjectionBank(ParamStore& store, std::size_t width, std::size_t layers, const StrategySpec& spec, Rng& rng,
                       DType dtype);

  /// x W_s diag(C_down) + B_down.
  Var down(Tape& tape, Var x, std::size_t layer) const;
  /// z W_s^T diag(C_up) + B_up.
  Var up(Tape& tape, Var z, std::size_t layer) const;

  Parameter& shared() const { return *shared_; }
  const LayerTerms& terms(std::size_t layer) const;
  std::size_t layers() const { return terms_.size(); }

 private:
  Parameter* shared_;
  std::vector<LayerTerms> terms_;
};

/// Deep visual prompts: p learnable tokens per layer placed right after CLS.
class PromptBank {
 public:
  PromptBank(ParamStore& store, std::size_t layers, std::size_t prompts, std::size_t width, std::size_t patch_size,
             Rng& rng, DType dtype);

  /// Replaces whatever special tokens follow CLS with this layer's prompts.
  TokenBatch inject(Tape& tape, TokenBatch x, std::size_t layer) const;

  std::size_t prompts() const { return prompts_; }
  Parameter& layer_prompts(std::size_t layer) const { return *tokens_.at(layer); }

 private:
  std::size_t prompts_;
  std::vector<Parameter*> tokens_;
};

}  // namespace pa::peft
