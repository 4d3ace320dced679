#pragma once

#include <cstdint>
#include <random>

#include "plotadapter/numerics/tensor.hpp"

namespace pa::num {

/// Seeded generator with platform-independent derived distributions.
///
/// std::uniform_real_distribution and friends are implementation-defined,
/// so the floating-point draws here are built from raw 64-bit outputs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  /// Derives an independent child seed, e.g. one per sample.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Tensor uniform_tensor(Shape shape, double lo, double hi, Rng& rng, DType dtype);
Tensor normal_tensor(Shape shape, double stddev, Rng& rng, DType dtype);

}  // namespace pa::num
