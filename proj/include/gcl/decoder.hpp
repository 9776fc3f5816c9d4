#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcl/nn.hpp"
#include "gcl/ops.hpp"
#include "gcl/params.hpp"
#include "gcl/tokenizer.hpp"

namespace gcl {

struct DecoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ff_width = 256;
  std::size_t d_model = 64;
  /// Longest BOS-prefixed decoder input.
  std::size_t max_output_len = 64;

  void validate(std::size_t encoder_width) const {
    if (d_model != encoder_width) {
      throw std::invalid_argument("decoder: d_model " + std::to_string(d_model) + " differs from encoder width " +
                                  std::to_string(encoder_width));
    }
    if (layers < 1) throw std::invalid_argument("decoder: layers must be >= 1");
    if (heads == 0 || d_model % heads != 0) throw std::invalid_argument("decoder: d_model must be divisible by heads");
    if (max_output_len < 2) throw std::invalid_argument("decoder: max_output_len must be >= 2");
  }
};

struct GenerationParams {
  std::size_t beam_size = 4;
  std::size_t max_len = 32;
  double length_penalty = 1.0;
};

/// Transformer decoder over the fused findings representation.
template <class T>
class Decoder {
public:
  Decoder() = default;
  Decoder(ParamStore<T>& store, const std::string& name, std::size_t vocab_size, const DecoderConfig& cfg, Rng& rng)
      : max_len_(cfg.max_output_len),
        tokens_(store.add_normal(name + ".tok_emb", {vocab_size, cfg.d_model}, 0.1, rng)),
        positions_(store.add_normal(name + ".pos_emb", {cfg.max_output_len, cfg.d_model}, 0.1, rng)),
        norm_(store, name + ".emb_norm", cfg.d_model),
        proj_(store, name + ".proj", cfg.d_model, vocab_size, rng) {
    for (std::size_t l = 0; l < cfg.layers; ++l)
      layers_.emplace_back(store, name + ".layer" + std::to_string(l), cfg.d_model, cfg.heads, cfg.ff_width, rng);
  }

  /// Logits (L x |V|) for a BOS-prefixed input of length L; row t sees
  /// inputs[0..t] and the memory.
  Tensor<T> operator()(const Tensor<T>& memory, std::span<const int> inputs, const nn::RunMode& mode = {}) const {
    if (inputs.empty()) throw std::invalid_argument("decoder_forward: empty target prefix");
    if (inputs.size() > max_len_) {
      throw std::length_error("decoder_forward: target length " + std::to_string(inputs.size()) + " exceeds maximum " +
                              std::to_string(max_len_));
    }
    std::vector<int> pos(inputs.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
    Tensor<T> x = norm_(add(embedding(tokens_, inputs), embedding(positions_, std::span<const int>(pos))));
    x = mode.drop(x);
    const nn::AttentionMask causal = nn::causal_mask(inputs.size());
    for (const auto& layer : layers_) x = layer(x, memory, causal, mode);
    return proj_(x);
  }

  std::size_t max_len() const { return max_len_; }

  const std::vector<nn::DecoderLayer<T>>& layers() const { return layers_; }

private:
  std::size_t max_len_ = 0;
  Tensor<T> tokens_, positions_;
  nn::LayerNorm<T> norm_;
  nn::Linear<T> proj_;
  std::vector<nn::DecoderLayer<T>> layers_;
};

/// Teacher-forced NLL over non-pad target positions.
template <class T>
Tensor<T> generation_loss(const Tensor<T>& logits, std::span<const int> targets, int pad_id = Vocab::kPad) {
  return cross_entropy_nll(logits, targets, pad_id);
}

namespace detail {

/// Log-probabilities of the last logits row, accumulated in double.
template <class T>
std::vector<double> last_row_log_probs(const Tensor<T>& logits) {
  const std::size_t v = logits.cols();
  const auto row = logits.data().subspan((logits.rows() - 1) * v, v);
  double mx = row[0];
  for (T x : row) mx = std::max(mx, static_cast<double>(x));
  double z = 0.0;
  for (T x : row) z += std::exp(static_cast<double>(x) - mx);
  const double log_z = mx + std::log(z);
  std::vector<double> out(v);
  for (std::size_t j = 0; j < v; ++j) out[j] = static_cast<double>(row[j]) - log_z;
  return out;
}

inline bool generatable(int id) { return id != Vocab::kPad && id != Vocab::kBos; }

}  // namespace detail

struct Hypothesis {
  std::vector<int> tokens;  // generated ids, without BOS or EOS
  double log_prob = 0.0;
  double score = 0.0;  // log_prob / len^penalty
  bool finished = false;
};

/// Step-by-step argmax decoding; ties go to the lower token id.
template <class T>
std::vector<int> greedy_decode(const Decoder<T>& decoder, const Tensor<T>& memory, std::size_t max_len) {
  NoGradGuard guard;
  std::vector<int> prefix{Vocab::kBos};
  const std::size_t cap = std::min(max_len, decoder.max_len() - 1);
  double total = 0.0;
  while (prefix.size() - 1 < cap) {
    const auto lp = detail::last_row_log_probs(decoder(memory, prefix));
    int best = -1;
    double best_total = 0.0;
    for (std::size_t j = 0; j < lp.size(); ++j) {
      if (!detail::generatable(static_cast<int>(j))) continue;
      // compare running totals so rounding matches the beam bookkeeping
      const double cand = total + lp[j];
      if (best < 0 || cand > best_total) {
        best = static_cast<int>(j);
        best_total = cand;
      }
    }
    if (best == Vocab::kEos) break;
    total = best_total;
    prefix.push_back(best);
  }
  return {prefix.begin() + 1, prefix.end()};
}

/// Beam search with length-normalized final ranking. With beam size 1 this
/// reduces exactly to greedy_decode.
template <class T>
Hypothesis beam_search(const Decoder<T>& decoder, const Tensor<T>& memory, const GenerationParams& gen,
                       std::vector<Hypothesis>* all_finished = nullptr) {
  if (gen.beam_size == 0) throw std::invalid_argument("generate: beam size must be >= 1");
  NoGradGuard guard;
  const std::size_t cap = std::min(gen.max_len, decoder.max_len() - 1);
  auto normalized = [&](double lp, std::size_t len) {
    return lp / std::pow(static_cast<double>(std::max<std::size_t>(len, 1)), gen.length_penalty);
  };

  std::vector<Hypothesis> beams{Hypothesis{}};
  std::vector<Hypothesis> finished;
  for (std::size_t step = 0; step < cap && !beams.empty(); ++step) {
    struct Candidate {
      double log_prob;
      std::size_t beam;
      int token;
    };
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      std::vector<int> prefix{Vocab::kBos};
      prefix.insert(prefix.end(), beams[b].tokens.begin(), beams[b].tokens.end());
      const auto lp = detail::last_row_log_probs(decoder(memory, prefix));
      for (std::size_t j = 0; j < lp.size(); ++j)
        if (detail::generatable(static_cast<int>(j))) cands.push_back({beams[b].log_prob + lp[j], b, static_cast<int>(j)});
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      if (a.token != b.token) return a.token < b.token;
      return a.beam < b.beam;
    });
    std::vector<Hypothesis> next;
    for (const auto& c : cands) {
      if (next.size() + finished.size() >= gen.beam_size) break;
      Hypothesis h{beams[c.beam].tokens, c.log_prob, 0.0, false};
      if (c.token == Vocab::kEos) {
        h.finished = true;
        h.score = normalized(h.log_prob, h.tokens.size() + 1);
        finished.push_back(std::move(h));
      } else {
        h.tokens.push_back(c.token);
        h.score = normalized(h.log_prob, h.tokens.size());
        next.push_back(std::move(h));
      }
    }
    beams = std::move(next);
  }
  for (auto& b : beams) finished.push_back(b);  // length cap reached
  if (all_finished) *all_finished = finished;
  const Hypothesis* best = &finished.front();
  for (const auto& h : finished)
    if (h.score > best->score) best = &h;
  return *best;
}

template <class T>
std::vector<int> generate(const Decoder<T>& decoder, const Tensor<T>& memory, const GenerationParams& gen) {
  return beam_search(decoder, memory, gen).tokens;
}

}  // namespace gcl
