#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcl/rng.hpp"
#include "gcl/tensor.hpp"

// Differentiable primitives. Every op checks shapes explicitly; there is no
// implicit broadcasting.
namespace gcl {

namespace detail {

template <class T>
void require_matrix(const Tensor<T>& x, const char* op) {
  if (x.rank() != 2) throw std::invalid_argument(std::string(op) + ": expected a matrix, got " + shape_str(x.shape()));
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

// out[m x n] += a[m x k] * b[k x n]
template <class T>
void gemm_nn(const T* a, const T* b, T* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* orow = out + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// out[m x k] += g[m x n] * b[k x n]^T
template <class T>
void gemm_nt(const T* g, const T* b, T* out, std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* grow = g + i * n;
    T* orow = out + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T* brow = b + p * n;
      T acc = T(0);
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      orow[p] += acc;
    }
  }
}

// out[k x n] += a[m x k]^T * g[m x n]
template <class T>
void gemm_tn(const T* a, const T* g, T* out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      T* orow = out + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * grow[j];
    }
  }
}

}  // namespace detail

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw std::invalid_argument("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<T> out(m * n, T(0));
  detail::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  auto* an = &a.node();
  auto* bn = &b.node();
  return make_result<T>("matmul", {m, n}, std::move(out), {&a, &b}, [an, bn, m, k, n](TensorNode<T>& self) {
    if (an->requires_grad) detail::gemm_nt(self.grad.data(), bn->data.data(), an->grad_buffer().data(), m, n, k);
    if (bn->requires_grad) detail::gemm_tn(an->data.data(), self.grad.data(), bn->grad_buffer().data(), m, k, n);
  });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m * n);
  const auto src = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = src[i * n + j];
  auto* an = &a.node();
  return make_result<T>("transpose", {n, m}, std::move(out), {&a}, [an, m, n](TensorNode<T>& self) {
    auto& g = an->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  auto* an = &a.node();
  auto* bn = &b.node();
  return make_result<T>("add", a.shape(), std::move(out), {&a, &b}, [an, bn](TensorNode<T>& self) {
    for (auto* in : {an, bn}) {
      if (!in->requires_grad) continue;
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  auto* an = &a.node();
  auto* bn = &b.node();
  return make_result<T>("mul", a.shape(), std::move(out), {&a, &b}, [an, bn](TensorNode<T>& self) {
    if (an->requires_grad) {
      auto& g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->data[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.values());
  for (auto& v : out) v *= factor;
  auto* an = &a.node();
  return make_result<T>("scale", a.shape(), std::move(out), {&a}, [an, factor](TensorNode<T>& self) {
    auto& g = an->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

/// x[N x d] + bias[d], bias repeated over rows.
template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  const std::size_t d = x.cols();
  if (bias.numel() != d) {
    throw std::invalid_argument("add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " +
                                shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<T> out(x.values());
  const auto b = bias.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] += b[j];
  auto* xn = &x.node();
  auto* bn = &bias.node();
  return make_result<T>("add_bias", x.shape(), std::move(out), {&x, &bias}, [xn, bn, rows, d](TensorNode<T>& self) {
    if (xn->requires_grad) {
      auto& g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[r * d + j];
    }
  });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  auto* an = &a.node();
  return make_result<T>("reshape", std::move(shape), a.values(), {&a}, [an](TensorNode<T>& self) {
    auto& g = an->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

/// Concatenation along the last axis. All parts share the leading shape.
template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& first = parts[0].shape();
  const std::size_t rows = parts[0].numel() / parts[0].cols();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin())) {
      throw std::invalid_argument("concat: leading shape mismatch " + shape_str(first) + " vs " + shape_str(s));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<T> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    const std::size_t w = widths[k];
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(src.data() + r * w, w, out.data() + r * total + offset);
    offset += w;
  }
  Shape shape = first;
  shape.back() = total;
  std::vector<TensorNode<T>*> nodes;
  for (const auto& p : parts) nodes.push_back(&p.node());
  return make_result<T>("concat", std::move(shape), std::move(out), parts,
                        [nodes, widths, rows, total](TensorNode<T>& self) {
                          std::size_t off = 0;
                          for (std::size_t k = 0; k < nodes.size(); ++k) {
                            const std::size_t w = widths[k];
                            if (nodes[k]->requires_grad) {
                              auto& g = nodes[k]->grad_buffer();
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t j = 0; j < w; ++j) g[r * w + j] += self.grad[r * total + off + j];
                            }
                            off += w;
                          }
                        });
}

/// Columns [begin, end) of the last axis.
template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  const std::size_t d = x.cols();
  if (begin >= end || end > d) {
    throw std::invalid_argument("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                ") invalid for " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d, w = end - begin;
  std::vector<T> out(rows * w);
  const auto src = x.data();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(src.data() + r * d + begin, w, out.data() + r * w);
  Shape shape = x.shape();
  shape.back() = w;
  auto* xn = &x.node();
  return make_result<T>("slice_cols", std::move(shape), std::move(out), {&x}, [xn, rows, d, w, begin](TensorNode<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < w; ++j) g[r * d + begin + j] += self.grad[r * w + j];
  });
}

/// Rows of `table` selected by `ids`.
template <class T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> ids) {
  detail::require_matrix(table, "embedding");
  if (ids.empty()) throw std::invalid_argument("embedding: empty id sequence");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<T> out(ids.size() * d);
  const auto src = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw std::invalid_argument("embedding: id " + std::to_string(ids[i]) + " at position " + std::to_string(i) +
                                  " outside table of " + std::to_string(vocab) + " rows");
    }
    std::copy_n(src.data() + ids[i] * d, d, out.data() + i * d);
  }
  auto* tn = &table.node();
  std::vector<int> rows(ids.begin(), ids.end());
  return make_result<T>("embedding", {ids.size(), d}, std::move(out), {&table}, [tn, rows, d](TensorNode<T>& self) {
    auto& g = tn->grad_buffer();
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) g[rows[i] * d + j] += self.grad[i * d + j];
  });
}

/// Normalizes each last-axis slice, then applies gain and shift.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
  const std::size_t d = x.cols();
  if (gamma.numel() != d || beta.numel() != d) {
    throw std::invalid_argument("layer_norm: affine parameters do not match last axis of " + shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<T> out(x.numel()), xhat(x.numel()), inv_std(rows);
  const auto src = x.data();
  const auto gm = gamma.data();
  const auto bt = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = src.data() + r * d;
    T mean = T(0);
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= T(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= T(d);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (row[j] - mean) * inv_std[r];
      out[r * d + j] = xhat[r * d + j] * gm[j] + bt[j];
    }
  }
  auto* xn = &x.node();
  auto* gn = &gamma.node();
  auto* bn = &beta.node();
  return make_result<T>(
      "layer_norm", x.shape(), std::move(out), {&x, &gamma, &beta},
      [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d](TensorNode<T>& self) {
        const auto& gy = self.grad;
        if (gn->requires_grad) {
          auto& g = gn->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) g[j] += gy[r * d + j] * xhat[r * d + j];
        }
        if (bn->requires_grad) {
          auto& g = bn->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) g[j] += gy[r * d + j];
        }
        if (xn->requires_grad) {
          auto& g = xn->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r) {
            T sum_g = T(0), sum_gx = T(0);
            for (std::size_t j = 0; j < d; ++j) {
              const T gxh = gy[r * d + j] * gn->data[j];
              sum_g += gxh;
              sum_gx += gxh * xhat[r * d + j];
            }
            for (std::size_t j = 0; j < d; ++j) {
              const T gxh = gy[r * d + j] * gn->data[j];
              g[r * d + j] += inv_std[r] / T(d) * (T(d) * gxh - sum_g - xhat[r * d + j] * sum_gx);
            }
          }
        }
      });
}

namespace detail {

template <class T, class F, class DF>
Tensor<T> unary(const char* op, const Tensor<T>& x, F f, DF df) {
  std::vector<T> out(x.numel());
  const auto src = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(src[i]);
  auto* xn = &x.node();
  return make_result<T>(op, x.shape(), std::move(out), {&x}, [xn, df](TensorNode<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(xn->data[i]);
  });
}

}  // namespace detail

/// Exact GELU, x * Phi(x).
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  return detail::unary(
      "gelu", x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v / std::sqrt(T(2)))); },
      [](T v) {
        const T cdf = T(0.5) * (T(1) + std::erf(v / std::sqrt(T(2))));
        const T pdf = std::exp(T(-0.5) * v * v) / std::sqrt(T(2) * T(M_PI));
        return cdf + v * pdf;
      });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.2)) {
  return detail::unary(
      "leaky_relu", x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v) { return v > T(0) ? T(1) : slope; });
}

template <class T>
Tensor<T> elu(const Tensor<T>& x, T alpha = T(1)) {
  return detail::unary(
      "elu", x, [alpha](T v) { return v > T(0) ? v : alpha * (std::exp(v) - T(1)); },
      [alpha](T v) { return v > T(0) ? T(1) : alpha * std::exp(v); });
}

/// Mean over the sequence (leading) axis of an N x d matrix, giving a d-vector.
template <class T>
Tensor<T> mean_rows(const Tensor<T>& x) {
  detail::require_matrix(x, "mean_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<T> out(d, T(0));
  const auto src = x.data();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) out[j] += src[r * d + j];
  for (auto& v : out) v /= T(n);
  auto* xn = &x.node();
  return make_result<T>("mean_rows", {d}, std::move(out), {&x}, [xn, n, d](TensorNode<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < d; ++j) g[r * d + j] += self.grad[j] / T(n);
  });
}

/// First row of an N x d matrix as a d-vector.
template <class T>
Tensor<T> first_row(const Tensor<T>& x) {
  detail::require_matrix(x, "first_row");
  const std::size_t d = x.dim(1);
  std::vector<T> out(x.data().begin(), x.data().begin() + d);
  auto* xn = &x.node();
  return make_result<T>("first_row", {d}, std::move(out), {&x}, [xn, d](TensorNode<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[j];
  });
}

/// Inverted dropout. Identity when not training or p == 0.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  const T keep_scale = T(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() < p ? T(0) : keep_scale;
  std::vector<T> out(x.numel());
  const auto src = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[i] * mask[i];
  auto* xn = &x.node();
  return make_result<T>("dropout", x.shape(), std::move(out), {&x}, [xn, mask = std::move(mask)](TensorNode<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

/// Softmax over last-axis slices. When `allowed` is non-empty it has one flag
/// per element; disallowed entries get probability exactly 0 and are not
/// inspected. Every slice must keep at least one allowed entry.
template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::span<const std::uint8_t> allowed = {}) {
  const std::size_t d = x.cols();
  const std::size_t rows = x.numel() / d;
  if (!allowed.empty() && allowed.size() != x.numel()) {
    throw std::invalid_argument("softmax: mask has " + std::to_string(allowed.size()) + " entries for " +
                                shape_str(x.shape()));
  }
  const auto src = x.data();
  std::vector<T> out(x.numel(), T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    T mx = -std::numeric_limits<T>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t i = r * d + j;
      if (!allowed.empty() && !allowed[i]) continue;
      if (!std::isfinite(src[i])) throw std::domain_error("softmax: non-finite input at index " + std::to_string(i));
      mx = std::max(mx, src[i]);
      any = true;
    }
    if (!any) throw std::invalid_argument("softmax: slice " + std::to_string(r) + " has no allowed entries");
    T z = T(0);
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t i = r * d + j;
      if (!allowed.empty() && !allowed[i]) continue;
      out[i] = std::exp(src[i] - mx);
      z += out[i];
    }
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] /= z;
  }
  auto* xn = &x.node();
  auto probs = out;
  return make_result<T>("softmax", x.shape(), std::move(out), {&x}, [xn, probs = std::move(probs), rows, d](TensorNode<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = T(0);
      for (std::size_t j = 0; j < d; ++j) dot += probs[r * d + j] * self.grad[r * d + j];
      for (std::size_t j = 0; j < d; ++j) {
        const std::size_t i = r * d + j;
        g[i] += probs[i] * (self.grad[i] - dot);
      }
    }
  });
}

/// a.b / (|a| |b|) over flattened equal-shape operands; returns a 1-element tensor.
template <class T>
Tensor<T> cosine_similarity(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "cosine_similarity");
  const auto x = a.data();
  const auto y = b.data();
  T dot = T(0), nx = T(0), ny = T(0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  nx = std::sqrt(nx);
  ny = std::sqrt(ny);
  if (!(nx > T(0)) || !(ny > T(0))) throw std::domain_error("cosine_similarity: zero-norm operand");
  const T cos = dot / (nx * ny);
  auto* an = &a.node();
  auto* bn = &b.node();
  return make_result<T>("cosine_similarity", {1}, {cos}, {&a, &b}, [an, bn, nx, ny, cos](TensorNode<T>& self) {
    const T g = self.grad[0];
    // d cos / d a = b / (|a||b|) - cos * a / |a|^2
    if (an->requires_grad) {
      auto& ga = an->grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * (bn->data[i] / (nx * ny) - cos * an->data[i] / (nx * nx));
    }
    if (bn->requires_grad) {
      auto& gb = bn->grad_buffer();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * (an->data[i] / (nx * ny) - cos * bn->data[i] / (ny * ny));
    }
  });
}

/// Mean negative log-likelihood of `targets` under row-wise softmax of
/// `logits` (L x V), skipping positions whose target is `pad_id`.
template <class T>
Tensor<T> cross_entropy_nll(const Tensor<T>& logits, std::span<const int> targets, int pad_id) {
  detail::require_matrix(logits, "cross_entropy_nll");
  const std::size_t len = logits.dim(0), vocab = logits.dim(1);
  if (targets.size() != len) {
    throw std::invalid_argument("cross_entropy_nll: " + std::to_string(targets.size()) + " targets for " +
                                std::to_string(len) + " logit rows");
  }
  const auto src = logits.data();
  std::vector<T> probs(logits.numel(), T(0));
  T total = T(0);
  std::size_t counted = 0;
  for (std::size_t t = 0; t < len; ++t) {
    const int y = targets[t];
    if (y == pad_id) continue;
    if (y < 0 || static_cast<std::size_t>(y) >= vocab) {
      throw std::invalid_argument("cross_entropy_nll: target " + std::to_string(y) + " at position " + std::to_string(t) +
                                  " outside vocabulary of " + std::to_string(vocab));
    }
    const T* row = src.data() + t * vocab;
    T mx = row[0];
    for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
    T z = T(0);
    for (std::size_t j = 0; j < vocab; ++j) z += std::exp(row[j] - mx);
    const T log_z = mx + std::log(z);
    total += log_z - row[y];
    for (std::size_t j = 0; j < vocab; ++j) probs[t * vocab + j] = std::exp(row[j] - log_z);
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("cross_entropy_nll: every position is padding");
  auto* ln = &logits.node();
  std::vector<int> ys(targets.begin(), targets.end());
  return make_result<T>("cross_entropy_nll", {1}, {total / T(counted)}, {&logits},
                        [ln, probs = std::move(probs), ys = std::move(ys), pad_id, vocab, counted](TensorNode<T>& self) {
                          auto& g = ln->grad_buffer();
                          const T scale = self.grad[0] / T(counted);
                          for (std::size_t t = 0; t < ys.size(); ++t) {
                            if (ys[t] == pad_id) continue;
                            for (std::size_t j = 0; j < vocab; ++j) g[t * vocab + j] += scale * probs[t * vocab + j];
                            g[t * vocab + ys[t]] -= scale;
                          }
                        });
}

/// Rows flagged in `replace` become the constant `fill` vector. Replaced rows
/// pass no gradient back to `x`.
template <class T>
Tensor<T> replace_rows(const Tensor<T>& x, const std::vector<bool>& replace, std::span<const T> fill) {
  detail::require_matrix(x, "replace_rows");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (replace.size() != n || fill.size() != d) {
    throw std::invalid_argument("replace_rows: flags/fill do not match " + shape_str(x.shape()));
  }
  std::vector<T> out(x.values());
  for (std::size_t r = 0; r < n; ++r)
    if (replace[r]) std::copy(fill.begin(), fill.end(), out.begin() + r * d);
  auto* xn = &x.node();
  return make_result<T>("replace_rows", x.shape(), std::move(out), {&x}, [xn, replace, d](TensorNode<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t r = 0; r < replace.size(); ++r) {
      if (replace[r]) continue;
      for (std::size_t j = 0; j < d; ++j) g[r * d + j] += self.grad[r * d + j];
    }
  });
}

/// Sum of all elements as a 1-element tensor.
template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  auto* xn = &x.node();
  return make_result<T>("sum", {1}, {total}, {&x}, [xn](TensorNode<T>& self) {
    auto& g = xn->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

}  // namespace gcl
