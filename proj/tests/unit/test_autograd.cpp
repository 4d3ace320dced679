#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "plotadapter/numerics/gradcheck.hpp"
#include "plotadapter/numerics/ops.hpp"
#include "plotadapter/numerics/rng.hpp"

using namespace pa::num;

namespace {

constexpr double kTol = 1e-4;

// Weighted sum keeps upstream gradients non-uniform so symmetric mistakes
// in a backward rule cannot cancel.
Var weighted_sum(Var y, std::uint64_t seed) {
  Rng rng(seed);
  auto w = y.tape().constant(uniform_tensor(y.shape(), 0.5, 1.5, rng, DType::f64));
  return sum(mul(y, w));
}

Tensor rand(Shape s, Rng& rng, double lo = -1, double hi = 1) { return uniform_tensor(std::move(s), lo, hi, rng, DType::f64); }

struct Case {
  const char* name;
  std::function<Var(Tape&, Var, Rng&)> build;
  std::function<Shape(Rng&)> input_shape;
};

std::size_t ext(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

}  // namespace

TEST(Backward, SumGivesOnes) {
  Parameter p("p", Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6}, DType::f64));
  Tape t(DType::f64);
  t.backward(sum(t.param(p)));
  ASSERT_TRUE(p.grad);
  for (double v : p.grad->to_vector()) EXPECT_EQ(v, 1.0);
}

TEST(Backward, HalfSquareGivesValue) {
  Parameter p("p", Tensor::from_values({4}, {0.5, -2, 3, 0.25}, DType::f64));
  Tape t(DType::f64);
  auto v = t.param(p);
  t.backward(scale(sum(mul(v, v)), 0.5));
  EXPECT_TRUE(p.grad->bit_equal(p.value));
}

TEST(Backward, NonScalarLossRejected) {
  Tape t(DType::f64);
  auto x = t.leaf(Tensor({2}, DType::f64));
  EXPECT_THROW(t.backward(x), DimensionError);
}

TEST(Backward, NonContributingParameterGetsZeroGrad) {
  Parameter used("used", Tensor::full({2}, 1.0, DType::f64));
  Parameter unused("unused", Tensor::full({2}, 1.0, DType::f64));
  Tape t(DType::f64);
  auto u = t.param(used);
  t.param(unused);
  t.backward(sum(u));
  ASSERT_TRUE(unused.grad);
  for (double v : unused.grad->to_vector()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, FrozenParameterNeverGetsGrad) {
  Parameter frozen("frozen", Tensor::full({3}, 2.0, DType::f64), false);
  Parameter live("live", Tensor::full({3}, 1.0, DType::f64));
  Tape t(DType::f64);
  t.backward(sum(mul(t.param(frozen), t.param(live))));
  EXPECT_FALSE(frozen.grad.has_value());
  for (double v : live.grad->to_vector()) EXPECT_EQ(v, 2.0);
}

TEST(Backward, AccumulatesAcrossCalls) {
  Parameter p("p", Tensor::full({2}, 1.0, DType::f64));
  p.zero_grad();
  for (int i = 0; i < 3; ++i) {
    Tape t(DType::f64);
    t.backward(sum(t.param(p)));
  }
  for (double v : p.grad->to_vector()) EXPECT_EQ(v, 3.0);
  p.zero_grad();
  for (double v : p.grad->to_vector()) EXPECT_EQ(v, 0.0);
}

TEST(Tape, BackwardVisitsInReverseExecutionOrder) {
  Parameter p("p", Tensor::full({2, 2}, 0.3, DType::f64));
  Tape t(DType::f64);
  auto x = t.param(p);
  auto y = sum(sigmoid(matmul(x, x)));
  t.backward(y);
  auto forward = t.op_names();
  std::vector<std::string> reversed(forward.rbegin(), forward.rend());
  EXPECT_EQ(t.backward_trace(), reversed);
  t.clear();
  EXPECT_EQ(t.size(), 0u);
  EXPECT_TRUE(t.backward_trace().empty());
}

TEST(GradCheck, LinearFunctionAtNoiseFloor) {
  Rng rng(1);
  auto x = rand({3, 4}, rng);
  const double err = finite_difference_check([](Tape&, Var v) { return sum(scale(v, 3.0)); }, x, 1e-6);
  EXPECT_LT(err, 1e-9);
}

TEST(GradCheck, SigmoidAtZeroRecoversQuarter) {
  Tensor x({5}, DType::f64);
  Tape t(DType::f64);
  auto v = t.leaf(x);
  t.backward(sum(sigmoid(v)));
  for (double g : t.grad(v)->to_vector()) EXPECT_NEAR(g, 0.25, 1e-15);
  EXPECT_LT(finite_difference_check([](Tape&, Var in) { return sum(sigmoid(in)); }, x, 1e-6), 1e-8);
}

TEST(GradCheck, CorruptedBackwardRuleIsDetected) {
  // y = x^2 recorded with a deliberately wrong derivative of 3x.
  auto broken_square = [](Var x) {
    Tensor out = x.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out.set(i, out.at(i) * out.at(i));
    return x.tape().record(std::move(out), {x}, [](BackwardContext& ctx) {
      auto& gi = ctx.grad_in(0);
      for (std::size_t i = 0; i < gi.numel(); ++i) gi.set(i, gi.at(i) + 3.0 * ctx.input(0).at(i) * ctx.grad_out().at(i));
    }, "broken_square");
  };
  Rng rng(2);
  const double err = finite_difference_check([&](Tape&, Var v) { return sum(broken_square(v)); }, rand({6}, rng), 1e-6);
  EXPECT_GT(err, 0.1);
}

TEST(GradCheck, NonDeterministicFunctionRejected) {
  int calls = 0;
  auto f = [&](const Tensor& x) { return x.at(0) + (calls++) * 1e-3; };
  Tensor x({1}, DType::f64);
  EXPECT_THROW(finite_difference_check(f, x, Tensor({1}, DType::f64), 1e-6), std::runtime_error);
}

TEST(GradCheck, EveryPrimitiveOnRandomShapes) {
  const std::vector<Case> cases = {
      {"add", [](Tape& t, Var x, Rng& r) { return add(x, t.constant(rand(x.shape(), r))); },
       [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 5)}; }},
      {"sub", [](Tape& t, Var x, Rng& r) { return sub(t.constant(rand(x.shape(), r)), x); },
       [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 5)}; }},
      {"mul", [](Tape& t, Var x, Rng& r) { return mul(x, t.constant(rand(x.shape(), r))); },
       [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 5)}; }},
      {"mul_self", [](Tape&, Var x, Rng&) { return mul(x, x); },
       [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 5)}; }},
      {"matmul_lhs", [](Tape& t, Var x, Rng& r) { return matmul(x, t.constant(rand({x.dim(1), 3}, r))); },
       [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 5)}; }},
      {"matmul_rhs", [](Tape& t, Var x, Rng& r) { return matmul(t.constant(rand({2, x.dim(0)}, r)), x); },
       [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 5)}; }},
      {"matmul_nt_lhs", [](Tape& t, Var x, Rng& r) { return matmul_nt(x, t.constant(rand({3, x.dim(1)}, r))); },
       [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 5)}; }},
      {"matmul_nt_rhs", [](Tape& t, Var x, Rng& r) { return matmul_nt(t.constant(rand({2, x.dim(1)}, r)), x); },
       [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 5)}; }},
      {"transpose", [](Tape&, Var x, Rng&) { return transpose(x); },
       [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 5)}; }},
      {"add_row_bias", [](Tape& t, Var x, Rng& r) { return add_row_bias(t.constant(rand({3, x.dim(0)}, r)), reshape(x, {x.dim(0)})); },
       [](Rng& r) { return Shape{ext(r, 1, 6), 1}; }},
      {"mul_cols_x", [](Tape& t, Var x, Rng& r) { return mul_cols(x, t.constant(rand({x.dim(1)}, r))); },
       [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 5)}; }},
      {"mul_cols_f", [](Tape& t, Var x, Rng& r) { return mul_cols(t.constant(rand({3, x.dim(0)}, r)), reshape(x, {x.dim(0)})); },
       [](Rng& r) { return Shape{ext(r, 1, 6), 1}; }},
      {"slice_concat", [](Tape&, Var x, Rng&) {
         std::vector<Var> parts{slice_cols(x, 0, 1), scale(slice_rows(x, 0, 1), 2.0)};
         return add(sum(concat_cols(std::vector<Var>{parts[0], parts[0]})), sum(concat_rows(std::vector<Var>{parts[1], parts[1]})));
       },
       [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 5)}; }},
      {"softmax", [](Tape&, Var x, Rng&) { return softmax(x); },
       [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 2, 6)}; }},
      {"layer_norm_x", [](Tape& t, Var x, Rng& r) {
         return layer_norm(x, t.constant(rand({x.dim(1)}, r, 0.5, 1.5)), t.constant(rand({x.dim(1)}, r)));
       },
       // D=2 normalizes every token to +-gamma, so the true input gradient is O(eps)
       [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 3, 6)}; }},
      {"layer_norm_gamma", [](Tape& t, Var g, Rng& r) {
         auto gv = reshape(g, {g.dim(0)});
         return layer_norm(t.constant(rand({3, g.dim(0)}, r, -2, 2)), gv, t.constant(rand({g.dim(0)}, r)));
       },
       [](Rng& r) { return Shape{ext(r, 2, 6), 1}; }},
      {"layer_norm_beta", [](Tape& t, Var b, Rng& r) {
         auto bv = reshape(b, {b.dim(0)});
         return layer_norm(t.constant(rand({3, b.dim(0)}, r, -2, 2)), t.constant(rand({b.dim(0)}, r)), bv);
       },
       [](Rng& r) { return Shape{ext(r, 2, 6), 1}; }},
      {"gelu", [](Tape&, Var x, Rng&) { return gelu(x); }, [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 5)}; }},
      {"relu", [](Tape&, Var x, Rng&) { return relu(x); }, [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 5)}; }},
      {"sigmoid", [](Tape&, Var x, Rng&) { return sigmoid(x); }, [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 5)}; }},
      {"depthwise_x", [](Tape& t, Var x, Rng& r) {
         return depthwise_conv3x3(x, t.constant(rand({x.dim(0), 3, 3}, r)), t.constant(rand({x.dim(0)}, r)));
       },
       [](Rng& r) { return Shape{ext(r, 1, 3), ext(r, 1, 5), ext(r, 1, 5)}; }},
      {"depthwise_kernel", [](Tape& t, Var k, Rng& r) {
         return depthwise_conv(t.constant(rand({k.dim(0), 4, 3}, r)), k, t.constant(rand({k.dim(0)}, r)));
       },
       [](Rng& r) { std::size_t k = 1 + 2 * ext(r, 0, 3); return Shape{ext(r, 1, 3), k, k}; }},
      {"depthwise_bias", [](Tape& t, Var b, Rng& r) {
         return depthwise_conv3x3(t.constant(rand({b.dim(0), 3, 4}, r)), t.constant(rand({b.dim(0), 3, 3}, r)), reshape(b, {b.dim(0)}));
       },
       [](Rng& r) { return Shape{ext(r, 1, 4), 1}; }},
      {"pointwise_x", [](Tape& t, Var x, Rng& r) {
         return pointwise_conv(x, t.constant(rand({3, x.dim(0)}, r)), t.constant(rand({3}, r)));
       },
       [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 4), ext(r, 1, 4)}; }},
      {"pointwise_w", [](Tape& t, Var w, Rng& r) {
         return pointwise_conv(t.constant(rand({w.dim(1), 3, 2}, r)), w, t.constant(rand({w.dim(0)}, r)));
       },
       [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 4)}; }},
      {"pointwise_b", [](Tape& t, Var b, Rng& r) {
         return pointwise_conv(t.constant(rand({2, 3, 3}, r)), t.constant(rand({b.dim(0), 2}, r)), reshape(b, {b.dim(0)}));
       },
       [](Rng& r) { return Shape{ext(r, 1, 4), 1}; }},
      {"conv2d_x", [](Tape& t, Var x, Rng& r) {
         return conv2d(x, t.constant(rand({2, x.dim(0), 3, 3}, r)), t.constant(rand({2}, r)));
       },
       [](Rng& r) { return Shape{ext(r, 1, 3), ext(r, 1, 4), ext(r, 1, 4)}; }},
      {"conv2d_w", [](Tape& t, Var w, Rng& r) {
         return conv2d(t.constant(rand({w.dim(1), 4, 3}, r)), w, t.constant(rand({w.dim(0)}, r)));
       },
       [](Rng& r) { std::size_t k = 1 + 2 * ext(r, 0, 2); return Shape{ext(r, 1, 2), ext(r, 1, 2), k, k}; }},
      {"global_avg_pool", [](Tape&, Var x, Rng&) { return global_avg_pool(x); },
       [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 4), ext(r, 1, 4)}; }},
      {"channel_mean", [](Tape&, Var x, Rng&) { return channel_mean(x); },
       [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 4), ext(r, 1, 4)}; }},
      {"channel_max", [](Tape&, Var x, Rng&) { return channel_max(x); },
       [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 4), ext(r, 1, 4)}; }},
      {"channel_gate_x", [](Tape& t, Var x, Rng& r) { return mul_channel_gate(x, t.constant(rand({x.dim(0), 1, 1}, r))); },
       [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 4), ext(r, 1, 4)}; }},
      {"channel_gate_g", [](Tape& t, Var g, Rng& r) { return mul_channel_gate(t.constant(rand({g.dim(0), 2, 3}, r)), g); },
       [](Rng& r) { return Shape{ext(r, 1, 4), 1, 1}; }},
      {"spatial_gate_x", [](Tape& t, Var x, Rng& r) { return mul_spatial_gate(x, t.constant(rand({1, x.dim(1), x.dim(2)}, r))); },
       [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 4), ext(r, 1, 4)}; }},
      {"spatial_gate_g", [](Tape& t, Var g, Rng& r) { return mul_spatial_gate(t.constant(rand({3, g.dim(1), g.dim(2)}, r)), g); },
       [](Rng& r) { return Shape{1, ext(r, 1, 4), ext(r, 1, 4)}; }},
      {"mean", [](Tape&, Var x, Rng&) { return mean(x); }, [](Rng& r) { return Shape{ext(r, 1, 4), ext(r, 1, 5)}; }},
  };

  for (const auto& c : cases) {
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
      Rng shape_rng(Rng::derive(trial, 17));
      const Shape shape = c.input_shape(shape_rng);
      Rng value_rng(Rng::derive(trial, 99));
      const Tensor x = rand(shape, value_rng, -2, 2);
      const std::uint64_t seed = Rng::derive(trial, 5);
      auto build = [&](Tape& t, Var v) {
        Rng r(seed);
        return weighted_sum(c.build(t, v, r), seed + 1);
      };
      const double err = finite_difference_check(build, x, 1e-6);
      EXPECT_LT(err, kTol) << c.name << " trial " << trial << " shape " << shape_str(shape);
    }
  }
}

// Depthwise token mixer -> squeeze-excitation gate -> GeLU channel mixer,
// the same composition an adapter block uses, checked end to end.
TEST(GradCheck, ComposedConvSeMixerGraph) {
  Rng rng(3);
  ParamStore store;
  const std::size_t c = 4, h = 3, w = 3;
  auto& dw_k = store.create("dw.k", rand({c, 3, 3}, rng));
  auto& dw_b = store.create("dw.b", rand({c}, rng));
  auto& se1_w = store.create("se1.w", rand({2, c}, rng));
  auto& se1_b = store.create("se1.b", rand({2}, rng));
  auto& se2_w = store.create("se2.w", rand({c, 2}, rng));
  auto& se2_b = store.create("se2.b", rand({c}, rng));
  auto& mx1_w = store.create("mx1.w", rand({2, c}, rng));
  auto& mx1_b = store.create("mx1.b", rand({2}, rng));
  auto& mx2_w = store.create("mx2.w", rand({c, 2}, rng));
  auto& mx2_b = store.create("mx2.b", rand({c}, rng));
  const Tensor input = rand({c, h, w}, rng);

  auto build = [&](Tape& t) {
    auto x = t.constant(input);
    auto x1 = add(depthwise_conv3x3(x, t.param(dw_k), t.param(dw_b)), x);
    auto squeezed = relu(pointwise_conv(global_avg_pool(x1), t.param(se1_w), t.param(se1_b)));
    auto gate = sigmoid(pointwise_conv(squeezed, t.param(se2_w), t.param(se2_b)));
    auto x2 = mul_channel_gate(x1, gate);
    auto mixed = pointwise_conv(gelu(pointwise_conv(x2, t.param(mx1_w), t.param(mx1_b))), t.param(mx2_w), t.param(mx2_b));
    return weighted_sum(add(mixed, x2), 77);
  };
  auto report = check_parameter_gradients(store.list(), build);
  EXPECT_LT(report.max_rel_error, kTol) << report.worst_param;
  EXPECT_EQ(report.elements_checked, store.list().element_count());
}
