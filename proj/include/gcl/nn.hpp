#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcl/ops.hpp"
#include "gcl/params.hpp"
#include "gcl/rng.hpp"

// Transformer building blocks shared by the encoders and the decoder.
namespace gcl::nn {

/// Dropout switch threaded through a forward pass.
struct RunMode {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;

  template <class T>
  Tensor<T> drop(const Tensor<T>& x) const {
    if (!training || dropout == 0.0) return x;
    if (rng == nullptr) throw std::invalid_argument("dropout requires a generator in training mode");
    return gcl::dropout(x, dropout, *rng, true);
  }
};

template <class T>
struct Linear {
  Tensor<T> weight;  // in x out
  Tensor<T> bias;    // out

  Linear() = default;
  Linear(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
      : weight(store.add_xavier(name + ".weight", in, out, rng)),
        bias(store.add_constant(name + ".bias", {out}, T(0))) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return add_bias(matmul(x, weight), bias); }
};

template <class T>
struct LayerNorm {
  Tensor<T> gamma;
  Tensor<T> beta;

  LayerNorm() = default;
  LayerNorm(ParamStore<T>& store, const std::string& name, std::size_t d)
      : gamma(store.add_constant(name + ".gamma", {d}, T(1))), beta(store.add_constant(name + ".beta", {d}, T(0))) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }
};

/// Row-major Nq x Nk flags; position (i, j) set when query i may see key j.
using AttentionMask = std::vector<std::uint8_t>;

inline AttentionMask causal_mask(std::size_t n) {
  AttentionMask m(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) m[i * n + j] = 1;
  return m;
}

template <class T>
struct MultiHeadAttention {
  std::size_t heads = 1;
  Linear<T> q, k, v, out;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<T>& store, const std::string& name, std::size_t d, std::size_t num_heads, Rng& rng)
      : heads(num_heads),
        q(store, name + ".q", d, d, rng),
        k(store, name + ".k", d, d, rng),
        v(store, name + ".v", d, d, rng),
        out(store, name + ".out", d, d, rng) {
    if (num_heads == 0 || d % num_heads != 0) {
      throw std::invalid_argument(name + ": width " + std::to_string(d) + " not divisible by " +
                                  std::to_string(num_heads) + " heads");
    }
  }

  Tensor<T> operator()(const Tensor<T>& query, const Tensor<T>& memory, const AttentionMask& mask = {}) const {
    const Tensor<T> qs = q(query), ks = k(memory), vs = v(memory);
    const std::size_t d = qs.cols(), dh = d / heads;
    const T inv_sqrt = T(1) / std::sqrt(T(dh));
    std::vector<Tensor<T>> parts;
    parts.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      const Tensor<T> qh = heads == 1 ? qs : slice_cols(qs, h * dh, (h + 1) * dh);
      const Tensor<T> kh = heads == 1 ? ks : slice_cols(ks, h * dh, (h + 1) * dh);
      const Tensor<T> vh = heads == 1 ? vs : slice_cols(vs, h * dh, (h + 1) * dh);
      const Tensor<T> scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
      parts.push_back(matmul(softmax(scores, std::span<const std::uint8_t>(mask)), vh));
    }
    return out(heads == 1 ? parts[0] : concat(parts));
  }
};

template <class T>
struct FeedForward {
  Linear<T> in, out;

  FeedForward() = default;
  FeedForward(ParamStore<T>& store, const std::string& name, std::size_t d, std::size_t hidden, Rng& rng)
      : in(store, name + ".in", d, hidden, rng), out(store, name + ".out", hidden, d, rng) {}

  Tensor<T> operator()(const Tensor<T>& x, const RunMode& mode) const { return out(mode.drop(gelu(in(x)))); }
};

/// Post-norm self-attention block.
template <class T>
struct EncoderLayer {
  MultiHeadAttention<T> attn;
  LayerNorm<T> norm1, norm2;
  FeedForward<T> ff;

  EncoderLayer() = default;
  EncoderLayer(ParamStore<T>& store, const std::string& name, std::size_t d, std::size_t heads, std::size_t ff_width,
               Rng& rng)
      : attn(store, name + ".attn", d, heads, rng),
        norm1(store, name + ".norm1", d),
        norm2(store, name + ".norm2", d),
        ff(store, name + ".ff", d, ff_width, rng) {}

  Tensor<T> operator()(const Tensor<T>& x, const RunMode& mode, const AttentionMask& mask = {}) const {
    const Tensor<T> a = norm1(add(x, mode.drop(attn(x, x, mask))));
    return norm2(add(a, mode.drop(ff(a, mode))));
  }
};

/// Post-norm block with causal self-attention and cross-attention.
template <class T>
struct DecoderLayer {
  MultiHeadAttention<T> self_attn, cross_attn;
  LayerNorm<T> norm1, norm2, norm3;
  FeedForward<T> ff;

  DecoderLayer() = default;
  DecoderLayer(ParamStore<T>& store, const std::string& name, std::size_t d, std::size_t heads, std::size_t ff_width,
               Rng& rng)
      : self_attn(store, name + ".self_attn", d, heads, rng),
        cross_attn(store, name + ".cross_attn", d, heads, rng),
        norm1(store, name + ".norm1", d),
        norm2(store, name + ".norm2", d),
        norm3(store, name + ".norm3", d),
        ff(store, name + ".ff", d, ff_width, rng) {}

  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& memory, const AttentionMask& causal,
                       const RunMode& mode) const {
    const Tensor<T> a = norm1(add(x, mode.drop(self_attn(x, x, causal))));
    const Tensor<T> b = norm2(add(a, mode.drop(cross_attn(a, memory))));
    return norm3(add(b, mode.drop(ff(b, mode))));
  }
};

}  // namespace gcl::nn
