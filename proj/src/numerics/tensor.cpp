#include "plotadapter/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace pa::num {

const char* dtype_name(DType dtype) { return dtype == DType::f64 ? "f64" : "f32"; }

DType parse_dtype(const std::string& name) {
  if (name == "f32" || name == "float32") return DType::f32;
  if (name == "f64" || name == "float64") return DType::f64;
  throw std::invalid_argument("unknown dtype '" + name + "'");
}

std::size_t dtype_size(DType dtype) { return dtype == DType::f64 ? 8 : 4; }

std::size_t shape_numel(const Shape& shape) {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)), dtype_(dtype) {
  if (shape_.empty()) throw DimensionError("tensor needs at least one extent");
  for (auto e : shape_) {
    if (e == 0) throw DimensionError("tensor extents must be positive: " + shape_str(shape_));
  }
  const auto n = shape_numel(shape_);
  if (dtype_ == DType::f64) {
    data_ = std::vector<double>(n, 0.0);
  } else {
    data_ = std::vector<float>(n, 0.0f);
  }
}

Tensor Tensor::full(Shape shape, double value, DType dtype) {
  Tensor t(std::move(shape), dtype);
  t.fill(value);
  return t;
}

Tensor Tensor::from_values(Shape shape, const std::vector<double>& values, DType dtype) {
  Tensor t(std::move(shape), dtype);
  if (values.size() != t.numel()) {
    throw DimensionError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_str(t.shape()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) t.set(i, values[i]);
  return t;
}

double Tensor::at(std::size_t i) const {
  return dispatch(dtype_, [&]<class T>() { return static_cast<double>(data<T>()[i]); });
}

void Tensor::set(std::size_t i, double value) {
  dispatch(dtype_, [&]<class T>() { data<T>()[i] = static_cast<T>(value); });
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on non-scalar tensor " + shape_str(shape_));
  return at(0);
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i);
  return out;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::cast(DType dtype) const {
  if (dtype == dtype_) return *this;
  Tensor t(shape_, dtype);
  for (std::size_t i = 0; i < numel(); ++i) t.set(i, at(i));
  return t;
}

void Tensor::fill(double value) {
  dispatch(dtype_, [&]<class T>() {
    auto d = data<T>();
    std::fill(d.begin(), d.end(), static_cast<T>(value));
  });
}

void Tensor::add_(const Tensor& other) {
  if (other.shape_ != shape_ || other.dtype_ != dtype_) {
    throw DimensionError("add_: " + shape_str(shape_) + " vs " + shape_str(other.shape_));
  }
  dispatch(dtype_, [&]<class T>() {
    auto d = data<T>();
    auto o = other.data<T>();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += o[i];
  });
}

bool Tensor::all_finite() const {
  return dispatch(dtype_, [&]<class T>() {
    for (T v : data<T>()) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  });
}

bool Tensor::bit_equal(const Tensor& other) const {
  if (shape_ != other.shape_ || dtype_ != other.dtype_) return false;
  auto a = bytes();
  auto b = other.bytes();
  return std::memcmp(a.data(), b.data(), a.size()) == 0;
}

std::span<const std::byte> Tensor::bytes() const {
  return dispatch(dtype_, [&]<class T>() { return std::as_bytes(data<T>()); });
}

std::span<std::byte> Tensor::mutable_bytes() {
  return dispatch(dtype_, [&]<class T>() { return std::as_writable_bytes(data<T>()); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("max_abs_diff shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
  return m;
}

}  // namespace pa::num
