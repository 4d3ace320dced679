#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "plotadapter/numerics/tape.hpp"

namespace pa::num {

// Elementwise. Operands must share shape and tape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);

// 2-D linear algebra.
Var matmul(Var a, Var b);      // [m,k]·[k,n]
Var matmul_nt(Var a, Var b);   // [m,k]·[n,k]ᵀ
Var transpose(Var a);
Var add_row_bias(Var x, Var bias);  // x[n,m] + bias[m] on every row
Var mul_cols(Var x, Var factors);   // x[n,m]·diag(factors[m])
Var affine(Var x, Var weight, Var bias);  // x[n,k]·w[k,m] + bias[m]

// Structural.
Var reshape(Var x, Shape shape);
Var slice_rows(Var x, std::size_t start, std::size_t count);
Var slice_cols(Var x, std::size_t start, std::size_t count);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);

// Normalization and activations, always over the last axis.
Var softmax(Var x);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-6);

enum class Activation { gelu, relu, sigmoid };
/// Throws std::invalid_argument for unknown names.
Activation parse_activation(std::string_view name);
const char* activation_name(Activation kind);
Var activation(Activation kind, Var x);
inline Var gelu(Var x) { return activation(Activation::gelu, x); }
inline Var relu(Var x) { return activation(Activation::relu, x); }
inline Var sigmoid(Var x) { return activation(Activation::sigmoid, x); }

// Convolutions on [C,H,W] feature maps. Stride 1, zero "same" padding.
Var depthwise_conv(Var x, Var kernels, Var bias);  // kernels [C,k,k], k odd
Var depthwise_conv3x3(Var x, Var kernels, Var bias);
Var pointwise_conv(Var x, Var weight, Var bias);   // weight [Cout,Cin]
Var conv2d(Var x, Var weight, Var bias);           // weight [Cout,Cin,k,k], k odd

// Pooling and gating on [C,H,W].
Var global_avg_pool(Var x);              // -> [C,1,1]
Var channel_mean(Var x);                 // -> [1,H,W]
Var channel_max(Var x);                  // -> [1,H,W]
Var mul_channel_gate(Var x, Var gate);   // gate [C,1,1]
Var mul_spatial_gate(Var x, Var gate);   // gate [1,H,W]

// Reductions to a scalar of shape {1}.
Var sum(Var x);
Var mean(Var x);

// Scalar reference functions shared by kernels and tests.
double gelu_scalar(double x);
double sigmoid_scalar(double x);

}  // namespace pa::num
