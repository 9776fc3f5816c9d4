#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcl/contrastive.hpp"
#include "gcl/decoder.hpp"
#include "gcl/encoder.hpp"
#include "gcl/graph.hpp"
#include "gcl/params.hpp"
#include "gcl/rng.hpp"

namespace gcl {

struct ModelConfig {
  std::size_t vocab_size = 0;
  EncoderConfig encoder;
  ContrastiveConfig contrastive;
  DecoderConfig decoder;

  void validate() const {
    if (vocab_size <= Vocab::kSpecialCount) throw std::invalid_argument("model: vocabulary too small");
    encoder.validate();
    contrastive.validate(encoder.d_model);
    decoder.validate(encoder.d_model);
  }
};

/// Losses of one training example.
template <class T>
struct ExampleLosses {
  Tensor<T> generation;
  Tensor<T> contrastive;  // empty when skipped or disabled
  bool contrastive_skipped = false;
};

/// Text encoder, GAT graph encoder, fusion MLP, contrastive encoder and
/// decoder sharing one parameter store. Parameter shapes do not depend on the
/// ablation switches.
template <class T>
class SummarizationModel {
public:
  SummarizationModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    const std::size_t d = cfg.encoder.d_model;
    text_ = TextEncoder<T>(store_, "text", cfg.vocab_size, cfg.encoder, rng);
    graph_ = GraphEncoder<T>(store_, "graph", cfg.encoder, rng);
    fusion_ = Fusion<T>(store_, "fusion", d, rng);
    contrastive_ = ContrastiveEncoder<T>(store_, "contrastive", d, cfg.contrastive, rng);
    decoder_ = Decoder<T>(store_, "decoder", cfg.vocab_size, cfg.decoder, rng);
  }

  SummarizationModel(const SummarizationModel&) = delete;
  SummarizationModel& operator=(const SummarizationModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

  const TextEncoder<T>& text_encoder() const { return text_; }
  const GraphEncoder<T>& graph_encoder() const { return graph_; }
  const Fusion<T>& fusion() const { return fusion_; }
  const ContrastiveEncoder<T>& contrastive_encoder() const { return contrastive_; }
  const Decoder<T>& decoder() const { return decoder_; }

  /// h, z and s for one findings. Without the graph, z is a constant zero
  /// matrix and the GAT is not run.
  EncodedFindings<T> encode(std::span<const int> ids, const RelationGraph& graph, bool use_graph,
                            const nn::RunMode& mode = {}) const {
    if (graph.n != ids.size()) {
      throw std::invalid_argument("encode: graph has " + std::to_string(graph.n) + " nodes for " +
                                  std::to_string(ids.size()) + " subwords");
    }
    EncodedFindings<T> out;
    out.h = text_(ids, mode);
    out.z = use_graph ? graph_(out.h, graph) : Tensor<T>::zeros(out.h.shape());
    out.s = fusion_(out.h, out.z);
    return out;
  }

  /// Teacher-forced generation loss and, when enabled and applicable, the
  /// contrastive loss for one example. `contrastive_mode`, when given, drives
  /// dropout in the contrastive encoder so that switching the contrastive
  /// branch on or off leaves the generation path's random stream untouched.
  ExampleLosses<T> losses(std::span<const int> source, const RelationGraph& graph, std::span<const int> target_in,
                          std::span<const int> target_out, bool use_graph, bool use_contrastive,
                          const nn::RunMode& mode = {}, const nn::RunMode* contrastive_mode = nullptr) const {
    const EncodedFindings<T> enc = encode(source, graph, use_graph, mode);
    ExampleLosses<T> out;
    out.generation = generation_loss(decoder_(enc.s, target_in, mode), target_out);
    if (use_contrastive) {
      if (contrastive_applicable(graph)) {
        const ContrastivePair<T> pair = generate_examples(enc.s, graph);
        const nn::RunMode& cm = contrastive_mode ? *contrastive_mode : mode;
        out.contrastive = contrastive_loss(contrastive_(enc.s, cm), contrastive_(pair.positive, cm),
                                           contrastive_(pair.negative, cm), cfg_.contrastive.tau);
      } else {
        out.contrastive_skipped = true;
      }
    }
    return out;
  }

  /// Pooled b, b^p, b^n for inspection.
  struct PooledTriple {
    Tensor<T> anchor, positive, negative;
  };
  PooledTriple contrastive_views(std::span<const int> source, const RelationGraph& graph, bool use_graph) const {
    NoGradGuard guard;
    const EncodedFindings<T> enc = encode(source, graph, use_graph);
    const ContrastivePair<T> pair = generate_examples(enc.s, graph);
    return {contrastive_(enc.s), contrastive_(pair.positive), contrastive_(pair.negative)};
  }

  std::vector<int> generate(std::span<const int> source, const RelationGraph& graph, bool use_graph,
                            const GenerationParams& gen) const {
    NoGradGuard guard;
    const EncodedFindings<T> enc = encode(source, graph, use_graph);
    return gcl::generate(decoder_, enc.s, gen);
  }

private:
  ModelConfig cfg_;
  ParamStore<T> store_;
  TextEncoder<T> text_;
  GraphEncoder<T> graph_;
  Fusion<T> fusion_;
  ContrastiveEncoder<T> contrastive_;
  Decoder<T> decoder_;
};

}  // namespace gcl
