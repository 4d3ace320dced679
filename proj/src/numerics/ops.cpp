#include "plotadapter/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace pa::num {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(),
          std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void require_rank(const Var& a, std::size_t rank, const char* op) {
  require(a.value().rank() == rank,
          std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(a.shape()));
}

// C[m,n] += A[m,k]·B[k,n]
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k]·B[n,k]ᵀ
template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[m,n] += A[k,m]ᵀ·B[k,n]
template <class T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t k, std::size_t m, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
T sigmoid_t(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
T gelu_t(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <class T>
T gelu_grad_t(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  return cdf + x * pdf;
}

std::size_t last_dim(const Shape& s) { return s.back(); }

}  // namespace

double gelu_scalar(double x) { return gelu_t(x); }
double sigmoid_scalar(double x) { return sigmoid_t(x); }

// ---------------------------------------------------------------------------
// Elementwise

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  out.add_(b.value());
  return a.tape().record(std::move(out), {a, b}, [](BackwardContext& ctx) {
    for (std::size_t i = 0; i < 2; ++i) {
      if (ctx.needs_grad(i)) ctx.grad_in(i).add_(ctx.grad_out());
    }
  }, "add");
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  dispatch(out.dtype(), [&]<class T>() {
    auto o = out.data<T>();
    auto bv = b.value().data<T>();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  });
  return a.tape().record(std::move(out), {a, b}, [](BackwardContext& ctx) {
    if (ctx.needs_grad(0)) ctx.grad_in(0).add_(ctx.grad_out());
    if (ctx.needs_grad(1)) {
      dispatch(ctx.grad_out().dtype(), [&]<class T>() {
        auto g = ctx.grad_out().data<T>();
        auto gi = ctx.grad_in(1).data<T>();
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] -= g[i];
      });
    }
  }, "sub");
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  dispatch(out.dtype(), [&]<class T>() {
    auto o = out.data<T>();
    auto bv = b.value().data<T>();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  });
  return a.tape().record(std::move(out), {a, b}, [](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      auto g = ctx.grad_out().data<T>();
      for (std::size_t k = 0; k < 2; ++k) {
        if (!ctx.needs_grad(k)) continue;
        auto other = ctx.input(1 - k).data<T>();
        auto gi = ctx.grad_in(k).data<T>();
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * other[i];
      }
    });
  }, "mul");
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  dispatch(out.dtype(), [&]<class T>() {
    for (T& v : out.data<T>()) v *= static_cast<T>(factor);
  });
  return a.tape().record(std::move(out), {a}, [factor](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      auto g = ctx.grad_out().data<T>();
      auto gi = ctx.grad_in(0).data<T>();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * static_cast<T>(factor);
    });
  }, "scale");
}

// ---------------------------------------------------------------------------
// Linear algebra

Var matmul(Var a, Var b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner extents differ " + shape_str(a.shape()) + "·" + shape_str(b.shape()));
  Tensor out({m, n}, a.value().dtype());
  dispatch(out.dtype(), [&]<class T>() {
    gemm_nn(a.value().data<T>().data(), b.value().data<T>().data(), out.data<T>().data(), m, k, n);
  });
  return a.tape().record(std::move(out), {a, b}, [m, k, n](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      const T* g = ctx.grad_out().data<T>().data();
      if (ctx.needs_grad(0)) gemm_nt(g, ctx.input(1).data<T>().data(), ctx.grad_in(0).data<T>().data(), m, n, k);
      if (ctx.needs_grad(1)) gemm_tn(ctx.input(0).data<T>().data(), g, ctx.grad_in(1).data<T>().data(), m, k, n);
    });
  }, "matmul");
}

Var matmul_nt(Var a, Var b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  require(b.dim(1) == k, "matmul_nt: inner extents differ " + shape_str(a.shape()) + "·" + shape_str(b.shape()) + "ᵀ");
  Tensor out({m, n}, a.value().dtype());
  dispatch(out.dtype(), [&]<class T>() {
    gemm_nt(a.value().data<T>().data(), b.value().data<T>().data(), out.data<T>().data(), m, k, n);
  });
  return a.tape().record(std::move(out), {a, b}, [m, k, n](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      const T* g = ctx.grad_out().data<T>().data();
      // dA = G·B, dB = Gᵀ·A
      if (ctx.needs_grad(0)) gemm_nn(g, ctx.input(1).data<T>().data(), ctx.grad_in(0).data<T>().data(), m, n, k);
      if (ctx.needs_grad(1)) gemm_tn(g, ctx.input(0).data<T>().data(), ctx.grad_in(1).data<T>().data(), m, n, k);
    });
  }, "matmul_nt");
}

Var transpose(Var a) {
  require_rank(a, 2, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor out({c, r}, a.value().dtype());
  dispatch(out.dtype(), [&]<class T>() {
    auto x = a.value().data<T>();
    auto o = out.data<T>();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) o[j * r + i] = x[i * c + j];
  });
  return a.tape().record(std::move(out), {a}, [r, c](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      auto g = ctx.grad_out().data<T>();
      auto gi = ctx.grad_in(0).data<T>();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gi[i * c + j] += g[j * r + i];
    });
  }, "transpose");
}

Var add_row_bias(Var x, Var bias) {
  require_rank(x, 2, "add_row_bias");
  const std::size_t n = x.dim(0), m = x.dim(1);
  require(bias.value().numel() == m, "add_row_bias: bias " + shape_str(bias.shape()) + " vs rows of width " +
                                         std::to_string(m));
  Tensor out = x.value();
  dispatch(out.dtype(), [&]<class T>() {
    auto o = out.data<T>();
    auto b = bias.value().data<T>();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) o[i * m + j] += b[j];
  });
  return x.tape().record(std::move(out), {x, bias}, [n, m](BackwardContext& ctx) {
    if (ctx.needs_grad(0)) ctx.grad_in(0).add_(ctx.grad_out());
    if (ctx.needs_grad(1)) {
      dispatch(ctx.grad_out().dtype(), [&]<class T>() {
        auto g = ctx.grad_out().data<T>();
        auto gb = ctx.grad_in(1).data<T>();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) gb[j] += g[i * m + j];
      });
    }
  }, "add_row_bias");
}

Var mul_cols(Var x, Var factors) {
  require_rank(x, 2, "mul_cols");
  const std::size_t n = x.dim(0), m = x.dim(1);
  require(factors.value().numel() == m, "mul_cols: factors " + shape_str(factors.shape()) + " vs width " +
                                            std::to_string(m));
  Tensor out = x.value();
  dispatch(out.dtype(), [&]<class T>() {
    auto o = out.data<T>();
    auto f = factors.value().data<T>();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) o[i * m + j] *= f[j];
  });
  return x.tape().record(std::move(out), {x, factors}, [n, m](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      auto g = ctx.grad_out().data<T>();
      auto xv = ctx.input(0).data<T>();
      auto f = ctx.input(1).data<T>();
      if (ctx.needs_grad(0)) {
        auto gx = ctx.grad_in(0).data<T>();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) gx[i * m + j] += g[i * m + j] * f[j];
      }
      if (ctx.needs_grad(1)) {
        auto gf = ctx.grad_in(1).data<T>();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) gf[j] += g[i * m + j] * xv[i * m + j];
      }
    });
  }, "mul_cols");
}

Var affine(Var x, Var weight, Var bias) { return add_row_bias(matmul(x, weight), bias); }

// ---------------------------------------------------------------------------
// Structural

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [](BackwardContext& ctx) {
    ctx.grad_in(0).add_(ctx.grad_out().reshaped(ctx.input(0).shape()));
  }, "reshape");
}

Var slice_rows(Var x, std::size_t start, std::size_t count) {
  require_rank(x, 2, "slice_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  require(count > 0 && start + count <= rows, "slice_rows: range out of bounds for " + shape_str(x.shape()));
  Tensor out({count, cols}, x.value().dtype());
  dispatch(out.dtype(), [&]<class T>() {
    auto src = x.value().data<T>();
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(start * cols), count * cols, out.data<T>().begin());
  });
  return x.tape().record(std::move(out), {x}, [start, cols](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      auto g = ctx.grad_out().data<T>();
      auto gi = ctx.grad_in(0).data<T>();
      for (std::size_t i = 0; i < g.size(); ++i) gi[start * cols + i] += g[i];
    });
  }, "slice_rows");
}

Var slice_cols(Var x, std::size_t start, std::size_t count) {
  require_rank(x, 2, "slice_cols");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  require(count > 0 && start + count <= cols, "slice_cols: range out of bounds for " + shape_str(x.shape()));
  Tensor out({rows, count}, x.value().dtype());
  dispatch(out.dtype(), [&]<class T>() {
    auto src = x.value().data<T>();
    auto o = out.data<T>();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < count; ++j) o[i * count + j] = src[i * cols + start + j];
  });
  return x.tape().record(std::move(out), {x}, [rows, cols, start, count](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      auto g = ctx.grad_out().data<T>();
      auto gi = ctx.grad_in(0).data<T>();
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < count; ++j) gi[i * cols + start + j] += g[i * count + j];
    });
  }, "slice_cols");
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t cols = parts[0].dim(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    require(p.dim(1) == cols, "concat_rows: column mismatch");
    rows += p.dim(0);
  }
  Tensor out({rows, cols}, parts[0].value().dtype());
  dispatch(out.dtype(), [&]<class T>() {
    auto o = out.data<T>().begin();
    for (const auto& p : parts) {
      auto src = p.value().data<T>();
      o = std::copy(src.begin(), src.end(), o);
    }
  });
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(out), inputs, [](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      auto g = ctx.grad_out().data<T>();
      std::size_t offset = 0;
      for (std::size_t k = 0;; ++k) {
        if (offset >= g.size()) break;
        const std::size_t n = ctx.input(k).numel();
        if (ctx.needs_grad(k)) {
          auto gi = ctx.grad_in(k).data<T>();
          for (std::size_t i = 0; i < n; ++i) gi[i] += g[offset + i];
        }
        offset += n;
      }
    });
  }, "concat_rows");
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t rows = parts[0].dim(0);
  std::size_t cols = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    require(p.dim(0) == rows, "concat_cols: row mismatch");
    widths.push_back(p.dim(1));
    cols += p.dim(1);
  }
  Tensor out({rows, cols}, parts[0].value().dtype());
  dispatch(out.dtype(), [&]<class T>() {
    auto o = out.data<T>();
    std::size_t col0 = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      auto src = parts[k].value().data<T>();
      const std::size_t w = widths[k];
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < w; ++j) o[i * cols + col0 + j] = src[i * w + j];
      col0 += w;
    }
  });
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(out), inputs, [rows, cols, widths](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      auto g = ctx.grad_out().data<T>();
      std::size_t col0 = 0;
      for (std::size_t k = 0; k < widths.size(); ++k) {
        const std::size_t w = widths[k];
        if (ctx.needs_grad(k)) {
          auto gi = ctx.grad_in(k).data<T>();
          for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < w; ++j) gi[i * w + j] += g[i * cols + col0 + j];
        }
        col0 += w;
      }
    });
  }, "concat_cols");
}

// ---------------------------------------------------------------------------
// Normalization and activations

Var softmax(Var x) {
  const std::size_t n = last_dim(x.shape());
  const std::size_t rows = x.value().numel() / n;
  Tensor out(x.shape(), x.value().dtype());
  dispatch(out.dtype(), [&]<class T>() {
    auto in = x.value().data<T>();
    auto o = out.data<T>();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* xr = in.data() + r * n;
      T* yr = o.data() + r * n;
      T mx = *std::max_element(xr, xr + n);
      T total = 0;
      for (std::size_t j = 0; j < n; ++j) {
        yr[j] = std::exp(xr[j] - mx);
        total += yr[j];
      }
      for (std::size_t j = 0; j < n; ++j) yr[j] /= total;
    }
  });
  return x.tape().record(std::move(out), {x}, [rows, n](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      auto g = ctx.grad_out().data<T>();
      auto y = ctx.output().data<T>();
      auto gi = ctx.grad_in(0).data<T>();
      for (std::size_t r = 0; r < rows; ++r) {
        T dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
        for (std::size_t j = 0; j < n; ++j) gi[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
      }
    });
  }, "softmax");
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const std::size_t d = last_dim(x.shape());
  require(gamma.value().numel() == d && beta.value().numel() == d,
          "layer_norm: affine width does not match last extent " + std::to_string(d));
  const std::size_t rows = x.value().numel() / d;
  Tensor out(x.shape(), x.value().dtype());
  dispatch(out.dtype(), [&]<class T>() {
    auto in = x.value().data<T>();
    auto gm = gamma.value().data<T>();
    auto bt = beta.value().data<T>();
    auto o = out.data<T>();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* xr = in.data() + r * d;
      T mu = 0;
      for (std::size_t j = 0; j < d; ++j) mu += xr[j];
      mu /= static_cast<T>(d);
      T var = 0;
      for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
      var /= static_cast<T>(d);
      const T rstd = T(1) / std::sqrt(var + static_cast<T>(eps));
      for (std::size_t j = 0; j < d; ++j) o[r * d + j] = (xr[j] - mu) * rstd * gm[j] + bt[j];
    }
  });
  return x.tape().record(std::move(out), {x, gamma, beta}, [rows, d, eps](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      auto g = ctx.grad_out().data<T>();
      auto in = ctx.input(0).data<T>();
      auto gm = ctx.input(1).data<T>();
      T* gx = ctx.needs_grad(0) ? ctx.grad_in(0).data<T>().data() : nullptr;
      T* gg = ctx.needs_grad(1) ? ctx.grad_in(1).data<T>().data() : nullptr;
      T* gb = ctx.needs_grad(2) ? ctx.grad_in(2).data<T>().data() : nullptr;
      std::vector<T> xhat(d), dxhat(d);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = in.data() + r * d;
        const T* gr = g.data() + r * d;
        T mu = 0;
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<T>(d);
        T var = 0;
        for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<T>(d);
        const T rstd = T(1) / std::sqrt(var + static_cast<T>(eps));
        T mean_dxhat = 0, mean_dxhat_xhat = 0;
        for (std::size_t j = 0; j < d; ++j) {
          xhat[j] = (xr[j] - mu) * rstd;
          dxhat[j] = gr[j] * gm[j];
          mean_dxhat += dxhat[j];
          mean_dxhat_xhat += dxhat[j] * xhat[j];
          if (gg) gg[j] += gr[j] * xhat[j];
          if (gb) gb[j] += gr[j];
        }
        mean_dxhat /= static_cast<T>(d);
        mean_dxhat_xhat /= static_cast<T>(d);
        if (gx) {
          for (std::size_t j = 0; j < d; ++j)
            gx[r * d + j] += rstd * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
        }
      }
    });
  }, "layer_norm");
}

Activation parse_activation(std::string_view name) {
  if (name == "gelu") return Activation::gelu;
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw std::invalid_argument("unknown activation: " + std::string(name));
}

const char* activation_name(Activation kind) {
  switch (kind) {
    case Activation::gelu: return "gelu";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

Var activation(Activation kind, Var x) {
  Tensor out = x.value();
  dispatch(out.dtype(), [&]<class T>() {
    for (T& v : out.data<T>()) {
      switch (kind) {
        case Activation::gelu: v = gelu_t(v); break;
        case Activation::relu: v = v > 0 ? v : T(0); break;
        case Activation::sigmoid: v = sigmoid_t(v); break;
      }
    }
  });
  return x.tape().record(std::move(out), {x}, [kind](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      auto g = ctx.grad_out().data<T>();
      auto in = ctx.input(0).data<T>();
      auto y = ctx.output().data<T>();
      auto gi = ctx.grad_in(0).data<T>();
      for (std::size_t i = 0; i < g.size(); ++i) {
        T d = 0;
        switch (kind) {
          case Activation::gelu: d = gelu_grad_t(in[i]); break;
          case Activation::relu: d = in[i] > 0 ? T(1) : T(0); break;
          case Activation::sigmoid: d = y[i] * (T(1) - y[i]); break;
        }
        gi[i] += g[i] * d;
      }
    });
  }, activation_name(kind));
}

// ---------------------------------------------------------------------------
// Convolutions

Var depthwise_conv(Var x, Var kernels, Var bias) {
  require_rank(x, 3, "depthwise_conv");
  require_rank(kernels, 3, "depthwise_conv");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t k = kernels.dim(1);
  require(kernels.dim(0) == c, "depthwise_conv: kernel channels " + std::to_string(kernels.dim(0)) +
                                   " vs input channels " + std::to_string(c));
  require(kernels.dim(2) == k && k % 2 == 1, "depthwise_conv: kernels must be square with odd size");
  require(bias.value().numel() == c, "depthwise_conv: bias channel mismatch");
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
  Tensor out(x.shape(), x.value().dtype());
  dispatch(out.dtype(), [&]<class T>() {
    auto in = x.value().data<T>();
    auto kv = kernels.value().data<T>();
    auto bv = bias.value().data<T>();
    auto o = out.data<T>();
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* plane = in.data() + ch * h * w;
      const T* kern = kv.data() + ch * k * k;
      for (std::ptrdiff_t y = 0; y < H; ++y) {
        for (std::ptrdiff_t xx = 0; xx < W; ++xx) {
          T acc = bv[ch];
          for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(k); ++i) {
            const std::ptrdiff_t yy = y + i - pad;
            if (yy < 0 || yy >= H) continue;
            for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(k); ++j) {
              const std::ptrdiff_t xs = xx + j - pad;
              if (xs < 0 || xs >= W) continue;
              acc += kern[i * static_cast<std::ptrdiff_t>(k) + j] * plane[yy * W + xs];
            }
          }
          o[ch * h * w + static_cast<std::size_t>(y * W + xx)] = acc;
        }
      }
    }
  });
  return x.tape().record(std::move(out), {x, kernels, bias}, [c, h, w, k, pad](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
      const auto K = static_cast<std::ptrdiff_t>(k);
      auto g = ctx.grad_out().data<T>();
      auto in = ctx.input(0).data<T>();
      auto kv = ctx.input(1).data<T>();
      T* gx = ctx.needs_grad(0) ? ctx.grad_in(0).data<T>().data() : nullptr;
      T* gk = ctx.needs_grad(1) ? ctx.grad_in(1).data<T>().data() : nullptr;
      T* gb = ctx.needs_grad(2) ? ctx.grad_in(2).data<T>().data() : nullptr;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T* plane = in.data() + ch * h * w;
        const T* gplane = g.data() + ch * h * w;
        const T* kern = kv.data() + ch * k * k;
        for (std::ptrdiff_t y = 0; y < H; ++y) {
          for (std::ptrdiff_t xx = 0; xx < W; ++xx) {
            const T go = gplane[y * W + xx];
            if (gb) gb[ch] += go;
            for (std::ptrdiff_t i = 0; i < K; ++i) {
              const std::ptrdiff_t yy = y + i - pad;
              if (yy < 0 || yy >= H) continue;
              for (std::ptrdiff_t j = 0; j < K; ++j) {
                const std::ptrdiff_t xs = xx + j - pad;
                if (xs < 0 || xs >= W) continue;
                if (gk) gk[ch * k * k + static_cast<std::size_t>(i * K + j)] += go * plane[yy * W + xs];
                if (gx) gx[ch * h * w + static_cast<std::size_t>(yy * W + xs)] += go * kern[i * K + j];
              }
            }
          }
        }
      }
    });
  }, "depthwise_conv");
}

Var depthwise_conv3x3(Var x, Var kernels, Var bias) {
  require(kernels.value().rank() == 3 && kernels.dim(1) == 3 && kernels.dim(2) == 3,
          "depthwise_conv3x3: kernels must be [C,3,3], got " + shape_str(kernels.shape()));
  return depthwise_conv(x, kernels, bias);
}

Var pointwise_conv(Var x, Var weight, Var bias) {
  require_rank(x, 3, "pointwise_conv");
  require_rank(weight, 2, "pointwise_conv");
  const std::size_t cin = x.dim(0), hw = x.dim(1) * x.dim(2);
  const std::size_t cout = weight.dim(0);
  require(weight.dim(1) == cin, "pointwise_conv: weight " + shape_str(weight.shape()) + " vs input channels " +
                                    std::to_string(cin));
  require(bias.value().numel() == cout, "pointwise_conv: bias channel mismatch");
  Tensor out({cout, x.dim(1), x.dim(2)}, x.value().dtype());
  dispatch(out.dtype(), [&]<class T>() {
    auto o = out.data<T>();
    auto bv = bias.value().data<T>();
    for (std::size_t oc = 0; oc < cout; ++oc) std::fill_n(o.begin() + static_cast<std::ptrdiff_t>(oc * hw), hw, bv[oc]);
    gemm_nn(weight.value().data<T>().data(), x.value().data<T>().data(), o.data(), cout, cin, hw);
  });
  return x.tape().record(std::move(out), {x, weight, bias}, [cin, cout, hw](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      const T* g = ctx.grad_out().data<T>().data();
      if (ctx.needs_grad(0)) gemm_tn(ctx.input(1).data<T>().data(), g, ctx.grad_in(0).data<T>().data(), cout, cin, hw);
      if (ctx.needs_grad(1)) gemm_nt(g, ctx.input(0).data<T>().data(), ctx.grad_in(1).data<T>().data(), cout, hw, cin);
      if (ctx.needs_grad(2)) {
        auto gb = ctx.grad_in(2).data<T>();
        for (std::size_t oc = 0; oc < cout; ++oc)
          for (std::size_t p = 0; p < hw; ++p) gb[oc] += g[oc * hw + p];
      }
    });
  }, "pointwise_conv");
}

Var conv2d(Var x, Var weight, Var bias) {
  require_rank(x, 3, "conv2d");
  require_rank(weight, 4, "conv2d");
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t cout = weight.dim(0), k = weight.dim(2);
  require(weight.dim(1) == cin, "conv2d: weight input channels mismatch");
  require(weight.dim(3) == k && k % 2 == 1, "conv2d: kernels must be square with odd size");
  require(bias.value().numel() == cout, "conv2d: bias channel mismatch");
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  Tensor out({cout, h, w}, x.value().dtype());
  dispatch(out.dtype(), [&]<class T>() {
    const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
    const auto K = static_cast<std::ptrdiff_t>(k);
    auto in = x.value().data<T>();
    auto wv = weight.value().data<T>();
    auto bv = bias.value().data<T>();
    auto o = out.data<T>();
    for (std::size_t oc = 0; oc < cout; ++oc) {
      for (std::ptrdiff_t y = 0; y < H; ++y) {
        for (std::ptrdiff_t xx = 0; xx < W; ++xx) {
          T acc = bv[oc];
          for (std::size_t ic = 0; ic < cin; ++ic) {
            const T* plane = in.data() + ic * h * w;
            const T* kern = wv.data() + (oc * cin + ic) * k * k;
            for (std::ptrdiff_t i = 0; i < K; ++i) {
              const std::ptrdiff_t yy = y + i - pad;
              if (yy < 0 || yy >= H) continue;
              for (std::ptrdiff_t j = 0; j < K; ++j) {
                const std::ptrdiff_t xs = xx + j - pad;
                if (xs < 0 || xs >= W) continue;
                acc += kern[i * K + j] * plane[yy * W + xs];
              }
            }
          }
          o[oc * h * w + static_cast<std::size_t>(y * W + xx)] = acc;
        }
      }
    }
  });
  return x.tape().record(std::move(out), {x, weight, bias}, [cin, cout, h, w, k, pad](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      const auto H = static_cast<std::ptrdiff_t>(h), W = static_cast<std::ptrdiff_t>(w);
      const auto K = static_cast<std::ptrdiff_t>(k);
      auto g = ctx.grad_out().data<T>();
      auto in = ctx.input(0).data<T>();
      auto wv = ctx.input(1).data<T>();
      T* gx = ctx.needs_grad(0) ? ctx.grad_in(0).data<T>().data() : nullptr;
      T* gw = ctx.needs_grad(1) ? ctx.grad_in(1).data<T>().data() : nullptr;
      T* gb = ctx.needs_grad(2) ? ctx.grad_in(2).data<T>().data() : nullptr;
      for (std::size_t oc = 0; oc < cout; ++oc) {
        for (std::ptrdiff_t y = 0; y < H; ++y) {
          for (std::ptrdiff_t xx = 0; xx < W; ++xx) {
            const T go = g[oc * h * w + static_cast<std::size_t>(y * W + xx)];
            if (gb) gb[oc] += go;
            for (std::size_t ic = 0; ic < cin; ++ic) {
              const std::size_t kbase = (oc * cin + ic) * k * k;
              for (std::ptrdiff_t i = 0; i < K; ++i) {
                const std::ptrdiff_t yy = y + i - pad;
                if (yy < 0 || yy >= H) continue;
                for (std::ptrdiff_t j = 0; j < K; ++j) {
                  const std::ptrdiff_t xs = xx + j - pad;
                  if (xs < 0 || xs >= W) continue;
                  const std::size_t src = ic * h * w + static_cast<std::size_t>(yy * W + xs);
                  const std::size_t kk = kbase + static_cast<std::size_t>(i * K + j);
                  if (gw) gw[kk] += go * in[src];
                  if (gx) gx[src] += go * wv[kk];
                }
              }
            }
          }
        }
      }
    });
  }, "conv2d");
}

// ---------------------------------------------------------------------------
// Pooling and gating

Var global_avg_pool(Var x) {
  require_rank(x, 3, "global_avg_pool");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  Tensor out({c, 1, 1}, x.value().dtype());
  dispatch(out.dtype(), [&]<class T>() {
    auto in = x.value().data<T>();
    auto o = out.data<T>();
    for (std::size_t ch = 0; ch < c; ++ch) {
      T acc = 0;
      for (std::size_t p = 0; p < hw; ++p) acc += in[ch * hw + p];
      o[ch] = acc / static_cast<T>(hw);
    }
  });
  return x.tape().record(std::move(out), {x}, [c, hw](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      auto g = ctx.grad_out().data<T>();
      auto gi = ctx.grad_in(0).data<T>();
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T share = g[ch] / static_cast<T>(hw);
        for (std::size_t p = 0; p < hw; ++p) gi[ch * hw + p] += share;
      }
    });
  }, "global_avg_pool");
}

Var channel_mean(Var x) {
  require_rank(x, 3, "channel_mean");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  Tensor out({1, x.dim(1), x.dim(2)}, x.value().dtype());
  dispatch(out.dtype(), [&]<class T>() {
    auto in = x.value().data<T>();
    auto o = out.data<T>();
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p) o[p] += in[ch * hw + p];
    for (T& v : o) v /= static_cast<T>(c);
  });
  return x.tape().record(std::move(out), {x}, [c, hw](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      auto g = ctx.grad_out().data<T>();
      auto gi = ctx.grad_in(0).data<T>();
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < hw; ++p) gi[ch * hw + p] += g[p] / static_cast<T>(c);
    });
  }, "channel_mean");
}

Var channel_max(Var x) {
  require_rank(x, 3, "channel_max");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  Tensor out({1, x.dim(1), x.dim(2)}, x.value().dtype());
  std::vector<std::size_t> argmax(hw, 0);
  dispatch(out.dtype(), [&]<class T>() {
    auto in = x.value().data<T>();
    auto o = out.data<T>();
    for (std::size_t p = 0; p < hw; ++p) {
      T best = in[p];
      for (std::size_t ch = 1; ch < c; ++ch) {
        if (in[ch * hw + p] > best) {
          best = in[ch * hw + p];
          argmax[p] = ch;
        }
      }
      o[p] = best;
    }
  });
  return x.tape().record(std::move(out), {x}, [hw, argmax = std::move(argmax)](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      auto g = ctx.grad_out().data<T>();
      auto gi = ctx.grad_in(0).data<T>();
      for (std::size_t p = 0; p < hw; ++p) gi[argmax[p] * hw + p] += g[p];
    });
  }, "channel_max");
}

Var mul_channel_gate(Var x, Var gate) {
  require_rank(x, 3, "mul_channel_gate");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  require(gate.value().numel() == c, "mul_channel_gate: gate " + shape_str(gate.shape()) + " vs channels " +
                                         std::to_string(c));
  Tensor out = x.value();
  dispatch(out.dtype(), [&]<class T>() {
    auto o = out.data<T>();
    auto gv = gate.value().data<T>();
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p) o[ch * hw + p] *= gv[ch];
  });
  return x.tape().record(std::move(out), {x, gate}, [c, hw](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      auto g = ctx.grad_out().data<T>();
      auto in = ctx.input(0).data<T>();
      auto gv = ctx.input(1).data<T>();
      T* gx = ctx.needs_grad(0) ? ctx.grad_in(0).data<T>().data() : nullptr;
      T* gg = ctx.needs_grad(1) ? ctx.grad_in(1).data<T>().data() : nullptr;
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t p = 0; p < hw; ++p) {
          if (gx) gx[ch * hw + p] += g[ch * hw + p] * gv[ch];
          if (gg) gg[ch] += g[ch * hw + p] * in[ch * hw + p];
        }
      }
    });
  }, "mul_channel_gate");
}

Var mul_spatial_gate(Var x, Var gate) {
  require_rank(x, 3, "mul_spatial_gate");
  const std::size_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  require(gate.value().numel() == hw, "mul_spatial_gate: gate " + shape_str(gate.shape()) + " vs grid of " +
                                          std::to_string(hw));
  Tensor out = x.value();
  dispatch(out.dtype(), [&]<class T>() {
    auto o = out.data<T>();
    auto gv = gate.value().data<T>();
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p) o[ch * hw + p] *= gv[p];
  });
  return x.tape().record(std::move(out), {x, gate}, [c, hw](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      auto g = ctx.grad_out().data<T>();
      auto in = ctx.input(0).data<T>();
      auto gv = ctx.input(1).data<T>();
      T* gx = ctx.needs_grad(0) ? ctx.grad_in(0).data<T>().data() : nullptr;
      T* gg = ctx.needs_grad(1) ? ctx.grad_in(1).data<T>().data() : nullptr;
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t p = 0; p < hw; ++p) {
          if (gx) gx[ch * hw + p] += g[ch * hw + p] * gv[p];
          if (gg) gg[p] += g[ch * hw + p] * in[ch * hw + p];
        }
      }
    });
  }, "mul_spatial_gate");
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(Var x) {
  Tensor out({1}, x.value().dtype());
  dispatch(out.dtype(), [&]<class T>() {
    T acc = 0;
    for (T v : x.value().data<T>()) acc += v;
    out.data<T>()[0] = acc;
  });
  return x.tape().record(std::move(out), {x}, [](BackwardContext& ctx) {
    dispatch(ctx.grad_out().dtype(), [&]<class T>() {
      const T g = ctx.grad_out().data<T>()[0];
      for (T& v : ctx.grad_in(0).data<T>()) v += g;
    });
  }, "sum");
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().numel())); }

}  // namespace pa::num
