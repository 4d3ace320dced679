#include "plotadapter/registry/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace pa::reg {

std::vector<ParamRow> params_report(const std::vector<std::size_t>& grid, const vit::BackboneConfig& config) {
  using peft::StrategySpec;
  std::vector<ParamRow> rows;
  auto add = [&](const StrategySpec& s) {
    const std::size_t n = peft::count_trainable_params(s, config, false);
    rows.push_back({s.label(), s.kind, s.dim, n, std::round(static_cast<double>(n) / 1e4) / 100.0});
  };
  add(StrategySpec::full());
  add(StrategySpec::linear());
  for (auto make : {&StrategySpec::vpt, &StrategySpec::vanilla, &StrategySpec::v1, &StrategySpec::v2})
    for (std::size_t d : grid) {
      const auto s = make(d);
      s.validate(config);
      add(s);
    }
  return rows;
}

std::string params_table(const std::vector<ParamRow>& rows) {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-22s %6s %12s %9s\n", "strategy", "dim", "trainable", "millions");
  os << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-22s %6zu %12zu %9.2f\n", r.strategy.c_str(), r.dim, r.count, r.millions);
    os << buf;
  }
  return os.str();
}

nlohmann::json params_json(const std::vector<ParamRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows)
    out.push_back({{"strategy", r.strategy},
                   {"kind", peft::kind_name(r.kind)},
                   {"dim", r.dim},
                   {"trainable", r.count},
                   {"millions", r.millions}});
  return out;
}

}  // namespace pa::reg
