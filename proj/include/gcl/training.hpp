#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gcl/config.hpp"
#include "gcl/corpus.hpp"
#include "gcl/graph.hpp"
#include "gcl/model.hpp"
#include "gcl/optim.hpp"
#include "gcl/tokenizer.hpp"

namespace gcl {

/// A loss or gradient became NaN or infinite.
class NonFiniteLoss : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// One record turned into model inputs.
struct PreparedExample {
  std::string id;
  TokenizedText source;
  RelationGraph graph;
  std::vector<int> target_in;   // BOS + impression subwords
  std::vector<int> target_out;  // impression subwords + EOS
  std::vector<std::string> reference;  // normalized impression tokens
  std::size_t findings_words = 0;
};

inline std::vector<std::string> vocab_corpus_words(const CorpusRecord& r) {
  std::vector<std::string> words = r.words;
  for (auto& w : normalize_text(r.impression)) words.push_back(std::move(w));
  return words;
}

/// Builds the vocabulary over findings and impression words.
inline Vocab build_corpus_vocab(const std::vector<CorpusRecord>& records, const VocabConfig& cfg) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(records.size());
  for (const auto& r : records) docs.push_back(vocab_corpus_words(r));
  return build_vocab(docs, cfg.max_size, cfg.min_freq);
}

inline PreparedExample prepare_example(const CorpusRecord& r, const Vocab& vocab, const RunConfig& cfg) {
  PreparedExample ex;
  ex.id = r.id;
  ex.source = encode_words(r.words, vocab);
  if (ex.source.size() > cfg.encoder.max_seq_len) {
    throw ValidationError("record '" + r.id + "': findings has " + std::to_string(ex.source.size()) +
                          " subwords, above max_seq_len " + std::to_string(cfg.encoder.max_seq_len));
  }
  try {
    ex.graph = build_relation_graph(ex.source, r.entities, r.dependencies, cfg.graph);
  } catch (const std::out_of_range& e) {
    throw ValidationError("record '" + r.id + "': " + e.what());
  }
  ex.reference = normalize_text(r.impression);
  const TokenizedText target = encode_words(ex.reference, vocab);
  if (target.size() + 1 > cfg.decoder.max_output_len) {
    throw ValidationError("record '" + r.id + "': impression has " + std::to_string(target.size()) +
                          " subwords, too long for max_output_len " + std::to_string(cfg.decoder.max_output_len));
  }
  ex.target_in.push_back(Vocab::kBos);
  ex.target_in.insert(ex.target_in.end(), target.ids.begin(), target.ids.end());
  ex.target_out = target.ids;
  ex.target_out.push_back(Vocab::kEos);
  ex.findings_words = r.words.size();
  return ex;
}

inline std::vector<PreparedExample> prepare_examples(const std::vector<CorpusRecord>& records, const Vocab& vocab,
                                                     const RunConfig& cfg) {
  std::vector<PreparedExample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(prepare_example(r, vocab, cfg));
  return out;
}

/// L = l_ge + lambda * l_con. An empty l_con (disabled or skipped) adds
/// nothing.
template <class T>
Tensor<T> joint_loss(const Tensor<T>& generation, const Tensor<T>& contrastive, double lambda) {
  if (!std::isfinite(static_cast<double>(generation.item()))) throw NonFiniteLoss("generation loss is not finite");
  if (!contrastive) return generation;
  if (!std::isfinite(static_cast<double>(contrastive.item()))) throw NonFiniteLoss("contrastive loss is not finite");
  return add(generation, scale(contrastive, T(lambda)));
}

struct StepLog {
  std::size_t step = 0;
  double l_ge = 0.0;
  double l_con = 0.0;
  double loss = 0.0;
  std::size_t skipped = 0;
  double grad_norm = 0.0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["step"] = step;
    j["l_ge"] = l_ge;
    j["l_con"] = l_con;
    j["L"] = loss;
    j["skipped"] = skipped;
    return j;
  }
};

/// Model, optimizer and step counter for one training run.
template <class T = float>
class Trainer {
public:
  Trainer(RunConfig cfg, Vocab vocab) : cfg_(std::move(cfg)), vocab_(std::move(vocab)) {
    cfg_.validate();
    ModelConfig mc{vocab_.size(), cfg_.encoder, cfg_.contrastive, cfg_.decoder};
    model_ = std::make_unique<SummarizationModel<T>>(mc, cfg_.train.seed);
    optimizer_ = Adam<T>(AdamHyper{cfg_.train.learning_rate, cfg_.train.adam_beta1, cfg_.train.adam_beta2,
                                   cfg_.train.adam_epsilon});
  }

  const RunConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  SummarizationModel<T>& model() { return *model_; }
  const SummarizationModel<T>& model() const { return *model_; }
  Adam<T>& optimizer() { return optimizer_; }
  const Adam<T>& optimizer() const { return optimizer_; }
  std::size_t step() const { return step_; }
  void set_step(std::size_t s) { step_ = s; }

  /// Example indices of a 1-based step. Examples are visited in a seeded
  /// per-epoch permutation, so the batch depends only on (seed, step).
  std::vector<std::size_t> batch_indices(std::size_t step, std::size_t n) {
    std::vector<std::size_t> out;
    const std::size_t b = cfg_.train.batch_size;
    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t pos = (step - 1) * b + i;
      out.push_back(permutation(pos / n, n)[pos % n]);
    }
    return out;
  }

  /// One optimizer step on the batch for step() + 1.
  StepLog train_step(const std::vector<PreparedExample>& data) {
    if (data.empty()) throw std::invalid_argument("train: empty corpus");
    const std::size_t step = step_ + 1;
    const auto batch = batch_indices(step, data.size());
    auto& store = model_->params();
    store.zero_grad();
    Rng drop_rng(derive_seed(cfg_.train.seed, (std::uint64_t{1} << 32) + step));
    Rng con_rng(derive_seed(cfg_.train.seed, (std::uint64_t{2} << 32) + step));
    const nn::RunMode mode{true, cfg_.encoder.dropout, &drop_rng};
    const nn::RunMode con_mode{true, cfg_.encoder.dropout, &con_rng};

    StepLog log;
    log.step = step;
    Tensor<T> total;
    for (std::size_t idx : batch) {
      const auto& ex = data[idx];
      ExampleLosses<T> l;
      try {
        l = model_->losses(ex.source.ids, ex.graph, ex.target_in, ex.target_out, cfg_.train.use_graph,
                           cfg_.train.use_contrastive, mode, &con_mode);
      } catch (const std::domain_error& e) {
        // NaN or infinite activations surface here before any loss exists
        throw NonFiniteLoss("step " + std::to_string(step) + ", record '" + ex.id + "': " + e.what());
      }
      const Tensor<T> joint = joint_loss(l.generation, l.contrastive, cfg_.train.lambda);
      log.l_ge += static_cast<double>(l.generation.item());
      if (l.contrastive) log.l_con += static_cast<double>(l.contrastive.item());
      if (l.contrastive_skipped) ++log.skipped;
      total = total ? add(total, joint) : joint;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    total = scale(total, T(inv));
    log.l_ge *= inv;
    log.l_con *= inv;
    log.loss = static_cast<double>(total.item());
    if (!std::isfinite(log.loss)) throw NonFiniteLoss("joint loss is not finite at step " + std::to_string(step));

    backward(total);
    log.grad_norm = clip_grad_norm(store, cfg_.train.clip_norm);
    if (!std::isfinite(log.grad_norm)) throw NonFiniteLoss("gradient norm is not finite at step " + std::to_string(step));
    optimizer_.step(store);
    step_ = step;
    return log;
  }

  /// Runs until max_steps. Stops at the first non-finite step with the model
  /// left at the last good state and rethrows.
  std::vector<StepLog> train(const std::vector<PreparedExample>& data,
                             const std::function<void(const StepLog&)>& on_step = {}) {
    std::vector<StepLog> logs;
    while (step_ < cfg_.train.max_steps) {
      logs.push_back(train_step(data));
      if (on_step) on_step(logs.back());
    }
    return logs;
  }

  /// Mean teacher-forced generation loss without recording.
  double mean_generation_loss(const std::vector<PreparedExample>& data) const {
    NoGradGuard guard;
    double total = 0.0;
    for (const auto& ex : data) {
      const auto enc = model_->encode(ex.source.ids, ex.graph, cfg_.train.use_graph);
      total += static_cast<double>(generation_loss(model_->decoder()(enc.s, ex.target_in), ex.target_out).item());
    }
    return data.empty() ? 0.0 : total / static_cast<double>(data.size());
  }

  std::vector<int> generate(const PreparedExample& ex, const GenerationParams& gen) const {
    return model_->generate(ex.source.ids, ex.graph, cfg_.train.use_graph, gen);
  }

private:
  const std::vector<std::size_t>& permutation(std::size_t epoch, std::size_t n) {
    auto it = perms_.find(epoch);
    if (it != perms_.end() && it->second.size() == n) return it->second;
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    Rng rng(derive_seed(cfg_.train.seed, epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
    return perms_[epoch] = std::move(p);
  }

  RunConfig cfg_;
  Vocab vocab_;
  std::unique_ptr<SummarizationModel<T>> model_;
  Adam<T> optimizer_;
  std::size_t step_ = 0;
  std::map<std::size_t, std::vector<std::size_t>> perms_;
};

}  // namespace gcl
