#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcl/graph.hpp"
#include "gcl/nn.hpp"
#include "gcl/ops.hpp"
#include "gcl/params.hpp"

namespace gcl {

struct EncoderConfig {
  std::size_t d_model = 64;
  std::size_t text_layers = 2;
  std::size_t heads = 4;
  std::size_t ff_width = 256;
  std::size_t gat_layers = 2;
  std::size_t gat_heads = 4;
  std::size_t max_seq_len = 128;
  double dropout = 0.0;

  void validate() const {
    if (d_model == 0 || heads == 0 || d_model % heads != 0)
      throw std::invalid_argument("encoder: d_model must be divisible by heads");
    if (gat_heads == 0 || d_model % gat_heads != 0)
      throw std::invalid_argument("encoder: d_model must be divisible by gat_heads");
    if (gat_layers < 1) throw std::invalid_argument("encoder: gat_layers must be >= 1");
    if (text_layers < 1) throw std::invalid_argument("encoder: text_layers must be >= 1");
    if (max_seq_len == 0) throw std::invalid_argument("encoder: max_seq_len must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("encoder: dropout must be in [0, 1)");
  }
};

/// Text features h, graph features z and fused features s, all N x d.
template <class T>
struct EncodedFindings {
  Tensor<T> h;
  Tensor<T> z;
  Tensor<T> s;
};

/// Token + learned position embeddings followed by a post-norm Transformer
/// encoder stack.
template <class T>
class TextEncoder {
public:
  TextEncoder() = default;
  TextEncoder(ParamStore<T>& store, const std::string& name, std::size_t vocab_size, const EncoderConfig& cfg, Rng& rng)
      : max_len_(cfg.max_seq_len),
        tokens_(store.add_normal(name + ".tok_emb", {vocab_size, cfg.d_model}, 0.1, rng)),
        positions_(store.add_normal(name + ".pos_emb", {cfg.max_seq_len, cfg.d_model}, 0.1, rng)),
        norm_(store, name + ".emb_norm", cfg.d_model) {
    for (std::size_t l = 0; l < cfg.text_layers; ++l)
      layers_.emplace_back(store, name + ".layer" + std::to_string(l), cfg.d_model, cfg.heads, cfg.ff_width, rng);
  }

  Tensor<T> operator()(std::span<const int> ids, const nn::RunMode& mode = {}) const {
    if (ids.empty()) throw std::invalid_argument("encode_text: empty input");
    if (ids.size() > max_len_) {
      throw std::length_error("encode_text: " + std::to_string(ids.size()) + " subwords exceed maximum length " +
                              std::to_string(max_len_));
    }
    std::vector<int> pos(ids.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
    Tensor<T> x = norm_(add(embedding(tokens_, ids), embedding(positions_, std::span<const int>(pos))));
    x = mode.drop(x);
    for (const auto& layer : layers_) x = layer(x, mode);
    return x;
  }

private:
  std::size_t max_len_ = 0;
  Tensor<T> tokens_, positions_;
  nn::LayerNorm<T> norm_;
  std::vector<nn::EncoderLayer<T>> layers_;
};

/// Self-loop-augmented in-neighborhood flags: entry (i, j) is set when j == i
/// or the graph has an edge j -> i.
inline nn::AttentionMask gat_neighborhood(const RelationGraph& graph) {
  const std::size_t n = graph.n;
  nn::AttentionMask m(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) m[i * n + i] = 1;
  for (const auto& [src, dst] : graph.edges) m[dst * n + src] = 1;
  return m;
}

/// One multi-head graph attention layer. Hidden layers concatenate heads;
/// the output layer averages them. ELU follows either way.
template <class T>
class GatLayer {
public:
  GatLayer() = default;
  GatLayer(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, std::size_t heads,
           bool concat_heads, Rng& rng)
      : concat_(concat_heads) {
    const std::size_t head_out = concat_heads ? out / heads : out;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::string p = name + ".head" + std::to_string(h);
      weights_.push_back(store.add_xavier(p + ".weight", in, head_out, rng));
      attn_self_.push_back(store.add_xavier(p + ".attn_self", head_out, 1, rng));
      attn_neighbor_.push_back(store.add_xavier(p + ".attn_neighbor", head_out, 1, rng));
    }
  }

  /// `alphas`, when given, receives one N x N attention matrix per head.
  Tensor<T> operator()(const Tensor<T>& x, const nn::AttentionMask& neighborhood,
                       std::vector<Tensor<T>>* alphas = nullptr) const {
    const std::size_t n = x.dim(0);
    const Tensor<T> ones_col = Tensor<T>::full({n, 1}, T(1));
    const Tensor<T> ones_row = Tensor<T>::full({1, n}, T(1));
    std::vector<Tensor<T>> outs;
    for (std::size_t h = 0; h < weights_.size(); ++h) {
      const Tensor<T> wh = matmul(x, weights_[h]);
      // e_ij = LeakyReLU(a_self . Wh_i + a_neighbor . Wh_j)
      const Tensor<T> f_self = matmul(wh, attn_self_[h]);
      const Tensor<T> f_nb = matmul(wh, attn_neighbor_[h]);
      const Tensor<T> logits =
          leaky_relu(add(matmul(f_self, ones_row), matmul(ones_col, transpose(f_nb))), T(0.2));
      const Tensor<T> alpha = softmax(logits, std::span<const std::uint8_t>(neighborhood));
      if (alphas) alphas->push_back(alpha);
      outs.push_back(matmul(alpha, wh));
    }
    if (outs.size() == 1) return elu(outs[0]);
    if (concat_) return elu(concat(outs));
    Tensor<T> acc = outs[0];
    for (std::size_t h = 1; h < outs.size(); ++h) acc = add(acc, outs[h]);
    return elu(scale(acc, T(1) / T(outs.size())));
  }

private:
  bool concat_ = true;
  std::vector<Tensor<T>> weights_, attn_self_, attn_neighbor_;
};

/// Stack of GAT layers over the relation graph.
template <class T>
class GraphEncoder {
public:
  GraphEncoder() = default;
  GraphEncoder(ParamStore<T>& store, const std::string& name, const EncoderConfig& cfg, Rng& rng) {
    for (std::size_t l = 0; l < cfg.gat_layers; ++l) {
      const bool last = l + 1 == cfg.gat_layers;
      layers_.emplace_back(store, name + ".layer" + std::to_string(l), cfg.d_model, cfg.d_model, cfg.gat_heads, !last,
                           rng);
    }
  }

  /// `alphas`, when given, receives the per-layer, per-head attention matrices.
  Tensor<T> operator()(const Tensor<T>& h, const RelationGraph& graph,
                       std::vector<std::vector<Tensor<T>>>* alphas = nullptr) const {
    if (h.rank() != 2 || h.dim(0) != graph.n) {
      throw std::invalid_argument("encode_graph: features " + shape_str(h.shape()) + " do not match graph of " +
                                  std::to_string(graph.n) + " nodes");
    }
    const nn::AttentionMask mask = gat_neighborhood(graph);
    Tensor<T> x = h;
    for (const auto& layer : layers_) {
      std::vector<Tensor<T>> layer_alphas;
      x = layer(x, mask, alphas ? &layer_alphas : nullptr);
      if (alphas) alphas->push_back(std::move(layer_alphas));
    }
    return x;
  }

  std::size_t layers() const { return layers_.size(); }

private:
  std::vector<GatLayer<T>> layers_;
};

/// Per-position MLP over [h_i ; z_i]: 2d -> d (GELU) -> d.
template <class T>
class Fusion {
public:
  Fusion() = default;
  Fusion(ParamStore<T>& store, const std::string& name, std::size_t d, Rng& rng)
      : hidden_(store, name + ".hidden", 2 * d, d, rng), out_(store, name + ".out", d, d, rng) {}

  Tensor<T> operator()(const Tensor<T>& h, const Tensor<T>& z) const {
    if (h.shape() != z.shape()) {
      throw std::invalid_argument("fuse: shape mismatch " + shape_str(h.shape()) + " vs " + shape_str(z.shape()));
    }
    return out_(gelu(hidden_(concat(std::vector<Tensor<T>>{h, z}))));
  }

private:
  nn::Linear<T> hidden_, out_;
};

}  // namespace gcl
