#pragma once

#include <cstddef>
#include <string>

#include <json.hpp>

#include "plotadapter/backbone/config.hpp"
#include "plotadapter/numerics/ops.hpp"

namespace pa::peft {

enum class Kind { full, linear, vpt, vanilla_adapter, plot_adapter_v1, plot_adapter_v2 };

const char* kind_name(Kind kind);
/// Accepts the canonical names and a few aliases ("adaptformer", "v2", ...).
Kind parse_kind(const std::string& name);

enum class TokenMixer { single, multiscale, stacked };  // 3x3 | 3x3+5x5+7x7 | 3x3 then 3x3
enum class ReAttention { se, sa };                      // channel SE | spatial attention
enum class ChannelMixer { squeeze, expand, single };    // D'->D'/2->D' | D'->2D'->D' | one D'->D' conv

/// CNN block layout inside Plot-Adapter V1/V2.
struct BlockVariant {
  TokenMixer token_mixer = TokenMixer::single;
  ReAttention attention = ReAttention::se;
  ChannelMixer channel_mixer = ChannelMixer::squeeze;
  /// Use the sigmoid gate itself as the block feature instead of gating X1.
  bool literal_gate = false;
  /// Activation between the two SE convolutions.
  num::Activation se_activation = num::Activation::relu;

  bool operator==(const BlockVariant&) const = default;
};

enum class InitMode { uniform, zeros };

/// Initialisation of the per-layer rescale vectors and biases of the shared projection.
struct SharedInit {
  InitMode down_rescale = InitMode::uniform;
  InitMode down_bias = InitMode::zeros;
  InitMode up_rescale = InitMode::uniform;
  InitMode up_bias = InitMode::zeros;

  bool operator==(const SharedInit&) const = default;
};

struct StrategySpec {
  Kind kind = Kind::plot_adapter_v2;
  /// Bottleneck D' for adapters, prompt count p for VPT; ignored otherwise.
  std::size_t dim = 16;
  /// Weight s of the adapter branch; a fixed hyperparameter.
  double influence = 0.1;
  /// SE reduction ratio r.
  std::size_t se_reduction = 4;
  BlockVariant block;
  SharedInit shared_init;
  /// Nonlinearity of the vanilla adapter.
  num::Activation vanilla_activation = num::Activation::relu;
  /// Half-width of uniform initialisers; 0 selects 1/sqrt(fan_in).
  double init_bound = 0.0;

  static StrategySpec of(Kind kind, std::size_t dim) {
    StrategySpec s;
    s.kind = kind;
    s.dim = dim;
    return s;
  }
  static StrategySpec full() { return of(Kind::full, 0); }
  static StrategySpec linear() { return of(Kind::linear, 0); }
  static StrategySpec vpt(std::size_t prompts) { return of(Kind::vpt, prompts); }
  static StrategySpec vanilla(std::size_t dim) { return of(Kind::vanilla_adapter, dim); }
  static StrategySpec v1(std::size_t dim) { return of(Kind::plot_adapter_v1, dim); }
  static StrategySpec v2(std::size_t dim) { return of(Kind::plot_adapter_v2, dim); }

  /// Parses "kind" or "kind-N", e.g. "plot_adapter_v2-64", "vpt-8", "linear".
  static StrategySpec parse(const std::string& text);
  /// Short label such as "plot_adapter_v2-64".
  std::string label() const;

  bool is_adapter() const;
  bool uses_cnn_block() const { return kind == Kind::plot_adapter_v1 || kind == Kind::plot_adapter_v2; }

  /// Throws std::invalid_argument if the spec cannot be built on `config`.
  void validate(const vit::BackboneConfig& config) const;

  bool operator==(const StrategySpec&) const = default;
};

void to_json(nlohmann::json& j, const StrategySpec& s);
void from_json(const nlohmann::json& j, StrategySpec& s);

/// Hidden width of the SE squeeze, floor(D'/r).
std::size_t se_hidden(const StrategySpec& spec);
/// Hidden width of the channel mixer (0 for the single-conv mixer).
std::size_t mixer_hidden(const StrategySpec& spec);

/// Closed-form parameter count of one CNN block.
std::size_t cnn_block_param_count(const StrategySpec& spec);

/// Closed-form trainable parameter count of a strategy on a backbone.
///   full      whole backbone
///   linear    0
///   vpt       p*D*L
///   vanilla   L*(D*D' + D' + D'*D + D)
///   v1        vanilla + L*block
///   v2        D*D' + L*(2D' + 2D) + L*block
/// include_head adds the m-way head (D*m + m).
std::size_t count_trainable_params(const StrategySpec& spec, const vit::BackboneConfig& config, bool include_head);

}  // namespace pa::peft
