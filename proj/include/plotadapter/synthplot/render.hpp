#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "plotadapter/numerics/tensor.hpp"
#include "plotadapter/synthplot/image.hpp"
#include "plotadapter/task/catalog.hpp"

namespace pa::synth {

enum class Domain { standard, hand_drawn };

const char* domain_name(Domain domain);
/// Throws std::invalid_argument for unknown names.
Domain parse_domain(const std::string& name);

/// The drawable classes, in python-13 catalog order.
const std::vector<std::string>& plot_classes();
/// pie and polar own the whole canvas; every other pair may share one axes frame.
bool compatible(const std::string& a, const std::string& b);
bool exclusive_class(const std::string& name);

struct Sample {
  RgbImage image;
  std::vector<std::string> classes;  // as requested, first is the primary class
  task::LabelVector labels;          // over python-13
  Domain domain = Domain::standard;
  std::uint64_t seed = 0;
};

/// Draws 1..3 mutually compatible classes on a white size x size canvas.
/// Deterministic in every argument. Throws std::invalid_argument for unknown,
/// repeated or incompatible classes.
Sample render_sample(const std::vector<std::string>& classes, Domain domain, std::uint64_t seed, std::size_t size = 64);

/// [3,H,W] tensor with values in [0,1].
num::Tensor to_tensor(const RgbImage& image, num::DType dtype);

}  // namespace pa::synth
