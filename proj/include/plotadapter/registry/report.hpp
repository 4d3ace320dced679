#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "plotadapter/peft/spec.hpp"

namespace pa::reg {

struct ParamRow {
  std::string strategy;  // label
  peft::Kind kind;
  std::size_t dim;       // D' or p; 0 for full and linear
  std::size_t count;     // trainable parameters, head excluded
  double millions;       // count / 1e6 rounded to two decimals
};

/// Trainable counts of every strategy over the given D'/p grid.
std::vector<ParamRow> params_report(const std::vector<std::size_t>& grid, const vit::BackboneConfig& config);
std::string params_table(const std::vector<ParamRow>& rows);
nlohmann::json params_json(const std::vector<ParamRow>& rows);

}  // namespace pa::reg
