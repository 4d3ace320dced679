#include "plotadapter/peft/spec.hpp"

#include <cctype>
#include <stdexcept>
#include <utility>

namespace pa::peft {

namespace {

template <class E, std::size_t N>
E enum_from(const std::string& text, const std::pair<const char*, E> (&table)[N], const char* what) {
  for (const auto& [name, value] : table)
    if (text == name) return value;
  throw std::invalid_argument(std::string("unknown ") + what + ": " + text);
}

template <class E, std::size_t N>
const char* enum_to(E value, const std::pair<const char*, E> (&table)[N]) {
  for (const auto& [name, v] : table)
    if (v == value) return name;
  return "?";
}

constexpr std::pair<const char*, Kind> kKinds[] = {
    {"full", Kind::full},
    {"linear", Kind::linear},
    {"vpt", Kind::vpt},
    {"vanilla_adapter", Kind::vanilla_adapter},
    {"plot_adapter_v1", Kind::plot_adapter_v1},
    {"plot_adapter_v2", Kind::plot_adapter_v2},
};
constexpr std::pair<const char*, Kind> kKindAliases[] = {
    {"full_tuning", Kind::full},      {"linear_probe", Kind::linear},  {"adaptformer", Kind::vanilla_adapter},
    {"vanilla", Kind::vanilla_adapter}, {"v1", Kind::plot_adapter_v1}, {"v2", Kind::plot_adapter_v2},
};
constexpr std::pair<const char*, TokenMixer> kTokenMixers[] = {
    {"single", TokenMixer::single}, {"multiscale", TokenMixer::multiscale}, {"stacked", TokenMixer::stacked}};
constexpr std::pair<const char*, ReAttention> kAttention[] = {{"se", ReAttention::se}, {"sa", ReAttention::sa}};
constexpr std::pair<const char*, ChannelMixer> kChannelMixers[] = {
    {"squeeze", ChannelMixer::squeeze}, {"expand", ChannelMixer::expand}, {"single", ChannelMixer::single}};
constexpr std::pair<const char*, InitMode> kInit[] = {{"uniform", InitMode::uniform}, {"zeros", InitMode::zeros}};

std::string normalize(std::string s) {
  for (auto& c : s) c = c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

const char* kind_name(Kind kind) { return enum_to(kind, kKinds); }

Kind parse_kind(const std::string& name) {
  const auto n = normalize(name);
  for (const auto& [k, v] : kKinds)
    if (n == k) return v;
  return enum_from(n, kKindAliases, "strategy");
}

StrategySpec StrategySpec::parse(const std::string& text) {
  StrategySpec spec;
  const auto dash = text.find_last_of('-');
  const bool has_dim = dash != std::string::npos && dash + 1 < text.size() &&
                       text.find_first_not_of("0123456789", dash + 1) == std::string::npos;
  spec.kind = parse_kind(has_dim ? text.substr(0, dash) : text);
  if (has_dim) {
    spec.dim = std::stoul(text.substr(dash + 1));
  } else if (spec.kind == Kind::vpt || spec.is_adapter()) {
    throw std::invalid_argument("strategy '" + text + "' needs a size suffix, e.g. " + kind_name(spec.kind) + "-16");
  }
  if (spec.kind == Kind::full || spec.kind == Kind::linear) spec.dim = 0;
  return spec;
}

std::string StrategySpec::label() const {
  std::string s = kind_name(kind);
  if (kind == Kind::vpt || is_adapter()) s += "-" + std::to_string(dim);
  return s;
}

bool StrategySpec::is_adapter() const {
  return kind == Kind::vanilla_adapter || kind == Kind::plot_adapter_v1 || kind == Kind::plot_adapter_v2;
}

void StrategySpec::validate(const vit::BackboneConfig& config) const {
  if (!(influence >= 0.0)) throw std::invalid_argument("influence must be non-negative");
  if (!(init_bound >= 0.0)) throw std::invalid_argument("init_bound must be non-negative");
  if (kind == Kind::vpt && dim < 1) throw std::invalid_argument("vpt needs at least one prompt");
  if (is_adapter()) {
    if (dim < 1 || dim > config.width) throw std::invalid_argument("bottleneck must satisfy 1 <= D' <= D");
  }
  if (uses_cnn_block()) {
    if (dim < 2) throw std::invalid_argument("Plot-Adapter needs D' >= 2");
    if (se_reduction < 1) throw std::invalid_argument("se_reduction must be positive");
    if (block.attention == ReAttention::se && se_hidden(*this) < 1)
      throw std::invalid_argument("SE squeeze width floor(D'/r) must be at least 1");
  }
}

void to_json(nlohmann::json& j, const StrategySpec& s) {
  j = nlohmann::json{
      {"kind", kind_name(s.kind)},
      {"dim", s.dim},
      {"influence", s.influence},
      {"se_reduction", s.se_reduction},
      {"init_bound", s.init_bound},
      {"vanilla_activation", num::activation_name(s.vanilla_activation)},
      {"block",
       {{"token_mixer", enum_to(s.block.token_mixer, kTokenMixers)},
        {"attention", enum_to(s.block.attention, kAttention)},
        {"channel_mixer", enum_to(s.block.channel_mixer, kChannelMixers)},
        {"literal_gate", s.block.literal_gate},
        {"se_activation", num::activation_name(s.block.se_activation)}}},
      {"shared_init",
       {{"down_rescale", enum_to(s.shared_init.down_rescale, kInit)},
        {"down_bias", enum_to(s.shared_init.down_bias, kInit)},
        {"up_rescale", enum_to(s.shared_init.up_rescale, kInit)},
        {"up_bias", enum_to(s.shared_init.up_bias, kInit)}}},
  };
}

void from_json(const nlohmann::json& j, StrategySpec& s) {
  s = StrategySpec{};
  s.kind = parse_kind(j.at("kind").get<std::string>());
  s.dim = j.value("dim", s.dim);
  s.influence = j.value("influence", s.influence);
  s.se_reduction = j.value("se_reduction", s.se_reduction);
  s.init_bound = j.value("init_bound", s.init_bound);
  if (j.contains("vanilla_activation"))
    s.vanilla_activation = num::parse_activation(j["vanilla_activation"].get<std::string>());
  if (j.contains("block")) {
    const auto& b = j["block"];
    if (b.contains("token_mixer"))
      s.block.token_mixer = enum_from(b["token_mixer"].get<std::string>(), kTokenMixers, "token mixer");
    if (b.contains("attention")) s.block.attention = enum_from(b["attention"].get<std::string>(), kAttention, "attention");
    if (b.contains("channel_mixer"))
      s.block.channel_mixer = enum_from(b["channel_mixer"].get<std::string>(), kChannelMixers, "channel mixer");
    s.block.literal_gate = b.value("literal_gate", false);
    if (b.contains("se_activation")) s.block.se_activation = num::parse_activation(b["se_activation"].get<std::string>());
  }
  if (j.contains("shared_init")) {
    const auto& i = j["shared_init"];
    auto mode = [&](const char* key, InitMode def) {
      return i.contains(key) ? enum_from(i[key].get<std::string>(), kInit, "init mode") : def;
    };
    s.shared_init.down_rescale = mode("down_rescale", s.shared_init.down_rescale);
    s.shared_init.down_bias = mode("down_bias", s.shared_init.down_bias);
    s.shared_init.up_rescale = mode("up_rescale", s.shared_init.up_rescale);
    s.shared_init.up_bias = mode("up_bias", s.shared_init.up_bias);
  }
}

std::size_t se_hidden(const StrategySpec& spec) { return spec.dim / spec.se_reduction; }

std::size_t mixer_hidden(const StrategySpec& spec) {
  switch (spec.block.channel_mixer) {
    case ChannelMixer::squeeze: return spec.dim / 2;
    case ChannelMixer::expand: return spec.dim * 2;
    case ChannelMixer::single: return 0;
  }
  return 0;
}

std::size_t cnn_block_param_count(const StrategySpec& spec) {
  const std::size_t d = spec.dim;
  std::size_t token = 0;
  switch (spec.block.token_mixer) {
    case TokenMixer::single: token = 9 * d + d; break;
    case TokenMixer::multiscale: token = (9 + 25 + 49) * d + 3 * d; break;
    case TokenMixer::stacked: token = 2 * (9 * d + d); break;
  }
  std::size_t attention = 0;
  if (spec.block.attention == ReAttention::se) {
    const std::size_t h = se_hidden(spec);
    attention = d * h + h + h * d + d;
  } else {
    attention = 2 * 7 * 7 + 1;
  }
  const std::size_t h = mixer_hidden(spec);
  const std::size_t mixer = spec.block.channel_mixer == ChannelMixer::single ? d * d + d : d * h + h + h * d + d;
  return token + attention + mixer;
}

std::size_t count_trainable_params(const StrategySpec& spec, const vit::BackboneConfig& config, bool include_head) {
  const std::size_t D = config.width, L = config.depth, d = spec.dim;
  const std::size_t head = include_head ? D * config.num_classes + config.num_classes : 0;
  switch (spec.kind) {
    case Kind::full: return vit::declared_parameter_count(config, include_head);
    case Kind::linear: return head;
    case Kind::vpt: return d * D * L + head;
    case Kind::vanilla_adapter: return L * (D * d + d + d * D + D) + head;
    case Kind::plot_adapter_v1: return L * (D * d + d + d * D + D) + L * cnn_block_param_count(spec) + head;
    case Kind::plot_adapter_v2: return D * d + L * (2 * d + 2 * D) + L * cnn_block_param_count(spec) + head;
  }
  throw std::invalid_argument("unknown strategy kind");
}

}  // namespace pa::peft
