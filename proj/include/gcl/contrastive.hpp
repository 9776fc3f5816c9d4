#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcl/graph.hpp"
#include "gcl/nn.hpp"
#include "gcl/ops.hpp"
#include "gcl/params.hpp"

namespace gcl {

/// Fill value of every element of the mask vector m.
inline constexpr double kMaskValue = 1e-6;

enum class Pooling { mean, first };

struct ContrastiveConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ff_width = 256;
  double tau = 1.0;
  Pooling pooling = Pooling::mean;

  void validate(std::size_t d_model) const {
    if (layers < 1) throw std::invalid_argument("contrastive: layers must be >= 1");
    if (heads == 0 || d_model % heads != 0) throw std::invalid_argument("contrastive: d_model must be divisible by heads");
    if (!(tau > 0.0)) throw std::invalid_argument("contrastive: tau must be positive");
  }
};

/// Positive and negative sequences built from s.
template <class T>
struct ContrastivePair {
  Tensor<T> positive;  // non-key rows replaced by m
  Tensor<T> negative;  // key rows replaced by m
  std::vector<std::size_t> key;
};

/// Row masking over the key set: key rows are replaced in the negative,
/// every other row in the positive.
template <class T>
ContrastivePair<T> generate_examples(const Tensor<T>& s, const RelationGraph& graph) {
  if (s.rank() != 2 || s.dim(0) != graph.n) {
    throw std::invalid_argument("generate_examples: representation " + shape_str(s.shape()) +
                                " does not match graph of " + std::to_string(graph.n) + " nodes");
  }
  const std::size_t n = s.dim(0), d = s.dim(1);
  const std::vector<T> mask(d, T(kMaskValue));
  std::vector<bool> in_key(n, false);
  for (std::size_t j : graph.key) in_key[j] = true;
  std::vector<bool> non_key(n);
  for (std::size_t j = 0; j < n; ++j) non_key[j] = !in_key[j];
  return {replace_rows(s, non_key, std::span<const T>(mask)), replace_rows(s, in_key, std::span<const T>(mask)),
          graph.key};
}

/// Randomly initialized Transformer encoder followed by pooling to a d-vector.
template <class T>
class ContrastiveEncoder {
public:
  ContrastiveEncoder() = default;
  ContrastiveEncoder(ParamStore<T>& store, const std::string& name, std::size_t d, const ContrastiveConfig& cfg, Rng& rng)
      : pooling_(cfg.pooling) {
    for (std::size_t l = 0; l < cfg.layers; ++l)
      layers_.emplace_back(store, name + ".layer" + std::to_string(l), d, cfg.heads, cfg.ff_width, rng);
  }

  Tensor<T> operator()(const Tensor<T>& x, const nn::RunMode& mode = {}) const {
    if (x.rank() != 2 || x.dim(0) == 0) throw std::invalid_argument("contrastive_encode: expected a non-empty N x d input");
    Tensor<T> y = x;
    for (const auto& layer : layers_) y = layer(y, mode);
    return pooling_ == Pooling::mean ? mean_rows(y) : first_row(y);
  }

private:
  Pooling pooling_ = Pooling::mean;
  std::vector<nn::EncoderLayer<T>> layers_;
};

/// Two-way softmax loss -log(e^{s+/tau} / (e^{s+/tau} + e^{s-/tau})) with
/// s+ = sim(b, b_p) and s- = sim(b, b_n).
template <class T>
Tensor<T> contrastive_loss(const Tensor<T>& b, const Tensor<T>& b_pos, const Tensor<T>& b_neg, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("contrastive_loss: tau must be positive");
  const T inv_tau = T(1.0 / tau);
  const Tensor<T> sim_pos = scale(cosine_similarity(b, b_pos), inv_tau);
  const Tensor<T> sim_neg = scale(cosine_similarity(b, b_neg), inv_tau);
  const Tensor<T> logits = reshape(concat(std::vector<Tensor<T>>{sim_pos, sim_neg}), {1, 2});
  const int target = 0;
  return cross_entropy_nll(logits, std::span<const int>(&target, 1), -1);
}

/// A pair carries signal only when the key set is a proper non-empty subset.
inline bool contrastive_applicable(const RelationGraph& graph) { return !graph.key.empty() && graph.key.size() < graph.n; }

}  // namespace gcl
