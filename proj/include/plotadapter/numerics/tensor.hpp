#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace pa::num {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

const char* dtype_name(DType dtype);
/// Accepts f32/float32 and f64/float64.
DType parse_dtype(const std::string& name);
std::size_t dtype_size(DType dtype);

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised for incompatible extents (matmul inner dims, channel counts, ...).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an op would produce NaN or Inf from finite inputs.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major array with a runtime precision.
///
/// Tensors are values: copying duplicates the buffer. Every extent must be
/// positive; a scalar is represented with shape {1}.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, DType dtype);

  static Tensor zeros(Shape shape, DType dtype) { return Tensor(std::move(shape), dtype); }
  static Tensor full(Shape shape, double value, DType dtype);
  static Tensor from_values(Shape shape, const std::vector<double>& values, DType dtype);
  static Tensor scalar(double value, DType dtype) { return full({1}, value, dtype); }

  const Shape& shape() const { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return shape_numel(shape_); }
  DType dtype() const { return dtype_; }
  bool empty() const { return shape_.empty(); }

  template <class T>
  std::span<T> data() {
    return std::span<T>(std::get<std::vector<T>>(data_));
  }
  template <class T>
  std::span<const T> data() const {
    return std::span<const T>(std::get<std::vector<T>>(data_));
  }

  double at(std::size_t i) const;
  void set(std::size_t i, double value);
  double item() const;

  std::vector<double> to_vector() const;
  Tensor reshaped(Shape shape) const;
  Tensor cast(DType dtype) const;

  void fill(double value);
  /// this += other (same shape and dtype).
  void add_(const Tensor& other);

  bool all_finite() const;
  /// Bitwise equality of shape, dtype and payload.
  bool bit_equal(const Tensor& other) const;

  /// Raw little-endian payload bytes.
  std::span<const std::byte> bytes() const;
  std::span<std::byte> mutable_bytes();

 private:
  Shape shape_;
  DType dtype_ = DType::f32;
  std::variant<std::vector<float>, std::vector<double>> data_;
};

/// Calls fn.template operator()<T>() with T = float or double.
template <class Fn>
decltype(auto) dispatch(DType dtype, Fn&& fn) {
  if (dtype == DType::f64) return fn.template operator()<double>();
  return fn.template operator()<float>();
}

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace pa::num
