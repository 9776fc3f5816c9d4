#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcl/contrastive.hpp"
#include "gcl/corpus.hpp"
#include "gcl/decoder.hpp"
#include "gcl/encoder.hpp"
#include "gcl/graph.hpp"

namespace gcl {

struct TrainConfig {
  double lambda = 1.0;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t batch_size = 8;
  std::size_t max_steps = 300;
  std::uint64_t seed = 0;
  double clip_norm = 1.0;
  std::size_t validation_interval = 0;  // 0 disables
  bool use_graph = true;
  bool use_contrastive = true;

  void validate() const {
    if (!(lambda >= 0.0)) throw ValidationError("config: lambda must be >= 0");
    if (batch_size < 1) throw ValidationError("config: batch_size must be >= 1");
    if (!(clip_norm > 0.0)) throw ValidationError("config: clip_norm must be > 0");
    if (!(learning_rate > 0.0)) throw ValidationError("config: learning_rate must be > 0");
  }
};

struct EvalConfig {
  std::vector<std::size_t> bucket_edges{25, 45, 65, 85, 105, 125};
  double holdout_fraction = 0.125;
};

struct VocabConfig {
  std::size_t max_size = 8192;
  std::size_t min_freq = 2;
};

/// Every tunable of the pipeline, read from and written to a flat
/// `key = value` file.
struct RunConfig {
  EncoderConfig encoder;
  ContrastiveConfig contrastive;
  DecoderConfig decoder;
  TrainConfig train;
  GenerationParams generation;
  GraphOptions graph;
  EvalConfig eval;
  VocabConfig vocab;

  /// Applies one key. Throws ValidationError for unknown keys or bad values.
  void set(const std::string& key, const std::string& value) {
    auto as_size = [&](std::size_t& out) {
      std::size_t v = 0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || p != value.data() + value.size()) throw bad(key, value);
      out = v;
    };
    auto as_u64 = [&](std::uint64_t& out) {
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || p != value.data() + value.size()) throw bad(key, value);
      out = v;
    };
    auto as_double = [&](double& out) {
      try {
        std::size_t used = 0;
        out = std::stod(value, &used);
        if (used != value.size()) throw bad(key, value);
      } catch (const std::logic_error&) {
        throw bad(key, value);
      }
    };
    auto as_bool = [&](bool& out) {
      if (value == "true" || value == "1") out = true;
      else if (value == "false" || value == "0") out = false;
      else throw bad(key, value);
    };
    const std::map<std::string, std::function<void()>> table{
        {"d_model", [&] { as_size(encoder.d_model); decoder.d_model = encoder.d_model; }},
        {"text_layers", [&] { as_size(encoder.text_layers); }},
        {"heads", [&] { as_size(encoder.heads); }},
        {"ff_width", [&] { as_size(encoder.ff_width); }},
        {"gat_layers", [&] { as_size(encoder.gat_layers); }},
        {"gat_heads", [&] { as_size(encoder.gat_heads); }},
        {"max_seq_len", [&] { as_size(encoder.max_seq_len); }},
        {"dropout", [&] { as_double(encoder.dropout); }},
        {"contrastive_layers", [&] { as_size(contrastive.layers); }},
        {"contrastive_heads", [&] { as_size(contrastive.heads); }},
        {"contrastive_ff_width", [&] { as_size(contrastive.ff_width); }},
        {"tau", [&] { as_double(contrastive.tau); }},
        {"pooling",
         [&] {
           if (value == "mean") contrastive.pooling = Pooling::mean;
           else if (value == "first") contrastive.pooling = Pooling::first;
           else throw bad(key, value);
         }},
        {"decoder_layers", [&] { as_size(decoder.layers); }},
        {"decoder_heads", [&] { as_size(decoder.heads); }},
        {"decoder_ff_width", [&] { as_size(decoder.ff_width); }},
        {"max_output_len", [&] { as_size(decoder.max_output_len); }},
        {"lambda", [&] { as_double(train.lambda); }},
        {"learning_rate", [&] { as_double(train.learning_rate); }},
        {"lr_preset",
         [&] {
           // learning-rate presets of the two reported datasets
           if (value == "openi") train.learning_rate = 5e-3;
           else if (value == "mimic") train.learning_rate = 2e-4;
           else throw bad(key, value);
         }},
        {"adam_beta1", [&] { as_double(train.adam_beta1); }},
        {"adam_beta2", [&] { as_double(train.adam_beta2); }},
        {"adam_epsilon", [&] { as_double(train.adam_epsilon); }},
        {"batch_size", [&] { as_size(train.batch_size); }},
        {"max_steps", [&] { as_size(train.max_steps); }},
        {"seed", [&] { as_u64(train.seed); }},
        {"clip_norm", [&] { as_double(train.clip_norm); }},
        {"validation_interval", [&] { as_size(train.validation_interval); }},
        {"use_graph", [&] { as_bool(train.use_graph); }},
        {"use_contrastive", [&] { as_bool(train.use_contrastive); }},
        {"beam_size", [&] { as_size(generation.beam_size); }},
        {"gen_max_len", [&] { as_size(generation.max_len); }},
        {"length_penalty", [&] { as_double(generation.length_penalty); }},
        {"dependency_scope",
         [&] {
           if (value == "entity_touching") graph.dependency_scope = DependencyScope::entity_touching;
           else if (value == "all") graph.dependency_scope = DependencyScope::all;
           else throw bad(key, value);
         }},
        {"reverse_dependencies", [&] { as_bool(graph.reverse_dependencies); }},
        {"bucket_edges",
         [&] {
           std::vector<std::size_t> edges;
           std::stringstream ss(value);
           std::string item;
           while (std::getline(ss, item, ',')) {
             std::size_t v = 0;
             auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
             if (ec != std::errc() || p != item.data() + item.size()) throw bad(key, value);
             if (!edges.empty() && v <= edges.back()) throw bad(key, value);
             edges.push_back(v);
           }
           eval.bucket_edges = std::move(edges);
         }},
        {"holdout_fraction", [&] { as_double(eval.holdout_fraction); }},
        {"vocab_size", [&] { as_size(vocab.max_size); }},
        {"vocab_min_freq", [&] { as_size(vocab.min_freq); }},
    };
    auto it = table.find(key);
    if (it == table.end()) throw ValidationError("config: unknown key '" + key + "'");
    it->second();
  }

  /// Parses `key = value` lines; `#` starts a comment.
  static RunConfig parse(std::istream& in) {
    RunConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
      try {
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
      } catch (const ValidationError& e) {
        throw ValidationError("config line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    cfg.validate();
    return cfg;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    return parse(in);
  }

  void validate() const {
    try {
      encoder.validate();
      contrastive.validate(encoder.d_model);
      decoder.validate(encoder.d_model);
    } catch (const std::invalid_argument& e) {
      throw ValidationError(std::string("config: ") + e.what());
    }
    train.validate();
    if (generation.beam_size < 1) throw ValidationError("config: beam_size must be >= 1");
    if (eval.holdout_fraction < 0.0 || eval.holdout_fraction >= 1.0)
      throw ValidationError("config: holdout_fraction must be in [0, 1)");
  }

  /// Canonical serialization; parse(serialize()) reproduces the config.
  std::string serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << "d_model = " << encoder.d_model << '\n'
       << "text_layers = " << encoder.text_layers << '\n'
       << "heads = " << encoder.heads << '\n'
       << "ff_width = " << encoder.ff_width << '\n'
       << "gat_layers = " << encoder.gat_layers << '\n'
       << "gat_heads = " << encoder.gat_heads << '\n'
       << "max_seq_len = " << encoder.max_seq_len << '\n'
       << "dropout = " << encoder.dropout << '\n'
       << "contrastive_layers = " << contrastive.layers << '\n'
       << "contrastive_heads = " << contrastive.heads << '\n'
       << "contrastive_ff_width = " << contrastive.ff_width << '\n'
       << "tau = " << contrastive.tau << '\n'
       << "pooling = " << (contrastive.pooling == Pooling::mean ? "mean" : "first") << '\n'
       << "decoder_layers = " << decoder.layers << '\n'
       << "decoder_heads = " << decoder.heads << '\n'
       << "decoder_ff_width = " << decoder.ff_width << '\n'
       << "max_output_len = " << decoder.max_output_len << '\n'
       << "lambda = " << train.lambda << '\n'
       << "learning_rate = " << train.learning_rate << '\n'
       << "adam_beta1 = " << train.adam_beta1 << '\n'
       << "adam_beta2 = " << train.adam_beta2 << '\n'
       << "adam_epsilon = " << train.adam_epsilon << '\n'
       << "batch_size = " << train.batch_size << '\n'
       << "max_steps = " << train.max_steps << '\n'
       << "seed = " << train.seed << '\n'
       << "clip_norm = " << train.clip_norm << '\n'
       << "validation_interval = " << train.validation_interval << '\n'
       << "use_graph = " << (train.use_graph ? "true" : "false") << '\n'
       << "use_contrastive = " << (train.use_contrastive ? "true" : "false") << '\n'
       << "beam_size = " << generation.beam_size << '\n'
       << "gen_max_len = " << generation.max_len << '\n'
       << "length_penalty = " << generation.length_penalty << '\n'
       << "dependency_scope = " << (graph.dependency_scope == DependencyScope::all ? "all" : "entity_touching") << '\n'
       << "reverse_dependencies = " << (graph.reverse_dependencies ? "true" : "false") << '\n';
    os << "bucket_edges = ";
    for (std::size_t i = 0; i < eval.bucket_edges.size(); ++i) os << (i ? "," : "") << eval.bucket_edges[i];
    os << '\n'
       << "holdout_fraction = " << eval.holdout_fraction << '\n'
       << "vocab_size = " << vocab.max_size << '\n'
       << "vocab_min_freq = " << vocab.min_freq << '\n';
    return os.str();
  }

private:
  static ValidationError bad(const std::string& key, const std::string& value) {
    return ValidationError("config: invalid value '" + value + "' for key '" + key + "'");
  }
};

}  // namespace gcl
