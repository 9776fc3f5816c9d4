#pragma once

// Oracles and fixtures shared by the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <functional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gcl/gcl.hpp"

namespace gcl::testing {

// ---------------------------------------------------------------------------
// Finite differences

inline constexpr double kFdStep = 1e-5;
inline constexpr double kGradTolerance = 1e-4;
// Denominator floor of the relative error. Central differences at h = 1e-5
// carry ~1e-10 of round-off, so entries whose true gradient is exactly zero
// (e.g. attention key biases) would otherwise divide noise by noise.
inline constexpr double kRelFloor = 1e-5;

struct GradReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "<input>[<index>]"
};

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kRelFloor});
}

/// Compares backward() against central differences for every element of the
/// given leaves (or at most `max_per_input` evenly spaced elements of each).
inline GradReport check_gradients(const std::function<Tensor<double>()>& loss_fn, std::vector<Tensor<double>> inputs,
                                  std::size_t max_per_input = 0) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  backward(loss_fn());
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) {
    std::vector<double> g(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), g.begin());
    analytic.push_back(std::move(g));
  }

  GradReport rep;
  NoGradGuard guard;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto data = inputs[k].data();
    const std::size_t n = data.size();
    const std::size_t stride = (max_per_input == 0 || n <= max_per_input) ? 1 : n / max_per_input;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = data[i];
      data[i] = orig + kFdStep;
      const double up = loss_fn().item();
      data[i] = orig - kFdStep;
      const double down = loss_fn().item();
      data[i] = orig;
      const double numeric = (up - down) / (2.0 * kFdStep);
      const double err = rel_error(analytic[k][i], numeric);
      ++rep.checked;
      if (err > rep.max_rel_error || rep.worst.empty()) {
        rep.max_rel_error = std::max(rep.max_rel_error, err);
        if (err >= rep.max_rel_error) rep.worst = "input" + std::to_string(k) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

/// Normal(0, 1) values pushed at least `gap` away from zero, so kinked
/// activations are never probed at their kink.
inline Tensor<double> random_tensor(Shape shape, Rng& rng, double gap = 0.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) {
    x = rng.normal();
    if (std::abs(x) < gap) x = x < 0 ? x - gap : x + gap;
  }
  return Tensor<double>(std::move(shape), std::move(v));
}

/// Reduces any tensor to a scalar with fixed random weights so every output
/// element carries a distinct upstream gradient.
inline Tensor<double> weighted_sum(const Tensor<double>& y, const Tensor<double>& weights) {
  return sum(mul(y, weights));
}

// ---------------------------------------------------------------------------
// Tiny model for gradient checks of the composed losses

inline RunConfig tiny_config() {
  RunConfig cfg;
  cfg.encoder.d_model = 8;
  cfg.decoder.d_model = 8;
  cfg.encoder.heads = 2;
  cfg.encoder.ff_width = 12;
  cfg.encoder.gat_heads = 2;
  cfg.encoder.max_seq_len = 16;
  cfg.contrastive.heads = 2;
  cfg.contrastive.ff_width = 12;
  cfg.decoder.heads = 2;
  cfg.decoder.ff_width = 12;
  cfg.decoder.max_output_len = 10;
  return cfg;
}

inline ModelConfig tiny_model_config(std::size_t vocab_size) {
  const RunConfig cfg = tiny_config();
  return ModelConfig{vocab_size, cfg.encoder, cfg.contrastive, cfg.decoder};
}

/// Random relation graph over n nodes with a proper, non-empty key set.
inline RelationGraph random_graph(std::size_t n, Rng& rng, double density = 0.15) {
  RelationGraph g;
  g.n = n;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t t = 0; t < n; ++t)
      if (s != t && rng.uniform() < density) g.edges.emplace(s, t);
  g.key = key_token_indices(g);
  return g;
}

/// A named gradient check, run once per seed.
struct GradCase {
  std::string name;
  std::function<GradReport(std::uint64_t seed)> run;
};

inline std::vector<GradCase> primitive_grad_cases() {
  using TD = Tensor<double>;
  std::vector<GradCase> cases;
  auto unary_case = [&](std::string name, std::function<TD(const TD&)> f, Shape shape, double gap = 0.0) {
    cases.push_back({name, [f, shape, gap](std::uint64_t seed) {
                       Rng rng(seed);
                       TD x = random_tensor(shape, rng, gap);
                       TD w = random_tensor(f(x).shape(), rng);
                       return check_gradients([&] { return weighted_sum(f(x), w); }, {x});
                     }});
  };
  cases.push_back({"matmul", [](std::uint64_t seed) {
                     Rng rng(seed);
                     TD a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng), w = random_tensor({3, 5}, rng);
                     return check_gradients([&] { return weighted_sum(matmul(a, b), w); }, {a, b});
                   }});
  unary_case("transpose", [](const TD& x) { return transpose(x); }, {3, 5});
  cases.push_back({"add", [](std::uint64_t seed) {
                     Rng rng(seed);
                     TD a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng), w = random_tensor({3, 4}, rng);
                     return check_gradients([&] { return weighted_sum(add(a, b), w); }, {a, b});
                   }});
  cases.push_back({"mul", [](std::uint64_t seed) {
                     Rng rng(seed);
                     TD a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng), w = random_tensor({3, 4}, rng);
                     return check_gradients([&] { return weighted_sum(mul(a, b), w); }, {a, b});
                   }});
  unary_case("scale", [](const TD& x) { return scale(x, -1.7); }, {2, 6});
  cases.push_back({"add_bias", [](std::uint64_t seed) {
                     Rng rng(seed);
                     TD x = random_tensor({4, 3}, rng), b = random_tensor({3}, rng), w = random_tensor({4, 3}, rng);
                     return check_gradients([&] { return weighted_sum(add_bias(x, b), w); }, {x, b});
                   }});
  unary_case("reshape", [](const TD& x) { return reshape(x, {6, 2}); }, {3, 4});
  cases.push_back({"concat", [](std::uint64_t seed) {
                     Rng rng(seed);
                     TD a = random_tensor({3, 2}, rng), b = random_tensor({3, 4}, rng), w = random_tensor({3, 6}, rng);
                     return check_gradients([&] { return weighted_sum(concat(std::vector<TD>{a, b}), w); }, {a, b});
                   }});
  cases.push_back({"slice_cols", [](std::uint64_t seed) {
                     Rng rng(seed);
                     TD x = random_tensor({3, 5}, rng), w = random_tensor({3, 3}, rng);
                     return check_gradients([&] { return weighted_sum(slice_cols(x, 1, 4), w); }, {x});
                   }});
  cases.push_back({"embedding", [](std::uint64_t seed) {
                     Rng rng(seed);
                     TD table = random_tensor({6, 4}, rng), w = random_tensor({5, 4}, rng);
                     const std::vector<int> ids{2, 0, 5, 2, 3};
                     return check_gradients([&] { return weighted_sum(embedding(table, std::span<const int>(ids)), w); },
                                            {table});
                   }});
  cases.push_back({"layer_norm", [](std::uint64_t seed) {
                     Rng rng(seed);
                     TD x = random_tensor({3, 6}, rng), g = random_tensor({6}, rng), b = random_tensor({6}, rng);
                     TD w = random_tensor({3, 6}, rng);
                     return check_gradients([&] { return weighted_sum(layer_norm(x, g, b), w); }, {x, g, b});
                   }});
  unary_case("gelu", [](const TD& x) { return gelu(x); }, {3, 5});
  unary_case("leaky_relu", [](const TD& x) { return leaky_relu(x, 0.2); }, {3, 5}, 1e-3);
  unary_case("elu", [](const TD& x) { return elu(x); }, {3, 5}, 1e-3);
  cases.push_back({"mean_rows", [](std::uint64_t seed) {
                     Rng rng(seed);
                     TD x = random_tensor({4, 3}, rng), w = random_tensor({3}, rng);
                     return check_gradients([&] { return weighted_sum(mean_rows(x), w); }, {x});
                   }});
  cases.push_back({"first_row", [](std::uint64_t seed) {
                     Rng rng(seed);
                     TD x = random_tensor({4, 3}, rng), w = random_tensor({3}, rng);
                     return check_gradients([&] { return weighted_sum(first_row(x), w); }, {x});
                   }});
  cases.push_back({"dropout", [](std::uint64_t seed) {
                     Rng rng(seed);
                     TD x = random_tensor({4, 5}, rng), w = random_tensor({4, 5}, rng);
                     return check_gradients(
                         [&] {
                           Rng mask_rng(seed + 99);  // same mask on every evaluation
                           return weighted_sum(dropout(x, 0.3, mask_rng, true), w);
                         },
                         {x});
                   }});
  unary_case("softmax", [](const TD& x) { return softmax(x); }, {3, 5});
  cases.push_back({"softmax_masked", [](std::uint64_t seed) {
                     Rng rng(seed);
                     TD x = random_tensor({3, 4}, rng), w = random_tensor({3, 4}, rng);
                     std::vector<std::uint8_t> allowed(12, 1);
                     allowed[1] = allowed[6] = allowed[7] = allowed[11] = 0;
                     return check_gradients(
                         [&] { return weighted_sum(softmax(x, std::span<const std::uint8_t>(allowed)), w); }, {x});
                   }});
  cases.push_back({"cosine_similarity", [](std::uint64_t seed) {
                     Rng rng(seed);
                     TD a = random_tensor({6}, rng), b = random_tensor({6}, rng);
                     return check_gradients([&] { return scale(cosine_similarity(a, b), 2.5); }, {a, b});
                   }});
  cases.push_back({"cross_entropy_nll", [](std::uint64_t seed) {
                     Rng rng(seed);
                     TD logits = random_tensor({4, 6}, rng);
                     const std::vector<int> targets{3, 0, 5, 1};  // 0 is padding
                     return check_gradients(
                         [&] { return cross_entropy_nll(logits, std::span<const int>(targets), 0); }, {logits});
                   }});
  cases.push_back({"replace_rows", [](std::uint64_t seed) {
                     Rng rng(seed);
                     TD x = random_tensor({4, 3}, rng), w = random_tensor({4, 3}, rng);
                     const std::vector<bool> rows{false, true, false, true};
                     const std::vector<double> fill(3, kMaskValue);
                     return check_gradients(
                         [&] { return weighted_sum(replace_rows(x, rows, std::span<const double>(fill)), w); }, {x});
                   }});
  cases.push_back({"sum", [](std::uint64_t seed) {
                     Rng rng(seed);
                     TD x = random_tensor({3, 4}, rng);
                     return check_gradients([&] { return scale(sum(x), 0.3); }, {x});
                   }});
  cases.push_back({"multi_head_attention", [](std::uint64_t seed) {
                     Rng rng(seed);
                     ParamStore<double> store;
                     nn::MultiHeadAttention<double> attn(store, "attn", 8, 2, rng);
                     TD q = random_tensor({3, 8}, rng), m = random_tensor({5, 8}, rng), w = random_tensor({3, 8}, rng);
                     std::vector<TD> leaves{q, m};
                     for (const auto& [name, t] : store.entries()) leaves.push_back(t);
                     return check_gradients([&] { return weighted_sum(attn(q, m), w); }, leaves);
                   }});
  cases.push_back({"gat_layer", [](std::uint64_t seed) {
                     Rng rng(seed);
                     ParamStore<double> store;
                     GatLayer<double> gat(store, "gat", 6, 6, 2, true, rng);
                     const RelationGraph g = random_graph(5, rng, 0.3);
                     const auto mask = gat_neighborhood(g);
                     TD x = random_tensor({5, 6}, rng), w = random_tensor({5, 6}, rng);
                     std::vector<TD> leaves{x};
                     for (const auto& [name, t] : store.entries()) leaves.push_back(t);
                     return check_gradients([&] { return weighted_sum(gat(x, mask), w); }, leaves);
                   }});
  return cases;
}

/// Inputs for one tiny-model example.
struct TinyExample {
  std::vector<int> source, target_in, target_out;
  RelationGraph graph;
};

inline TinyExample tiny_example(std::size_t vocab_size, Rng& rng) {
  TinyExample ex;
  const std::size_t n = 6;
  for (std::size_t i = 0; i < n; ++i) ex.source.push_back(Vocab::kSpecialCount + static_cast<int>(rng.below(vocab_size - Vocab::kSpecialCount)));
  ex.target_in.push_back(Vocab::kBos);
  for (int i = 0; i < 3; ++i) {
    const int tok = Vocab::kSpecialCount + static_cast<int>(rng.below(vocab_size - Vocab::kSpecialCount));
    ex.target_in.push_back(tok);
    ex.target_out.push_back(tok);
  }
  ex.target_out.push_back(Vocab::kEos);
  do {
    ex.graph = random_graph(n, rng, 0.12);
  } while (!contrastive_applicable(ex.graph));
  return ex;
}

/// A model small enough to train for a few steps inside a unit test, sized for
/// synthetic records.
inline RunConfig small_run_config() {
  RunConfig cfg = tiny_config();
  cfg.encoder.d_model = cfg.decoder.d_model = 16;
  cfg.encoder.ff_width = cfg.contrastive.ff_width = cfg.decoder.ff_width = 32;
  cfg.encoder.max_seq_len = 128;
  cfg.decoder.max_output_len = 40;
  cfg.encoder.dropout = 0.1;
  cfg.train.batch_size = 4;
  cfg.train.max_steps = 10;
  cfg.generation.max_len = 20;
  return cfg;
}

struct SmallSetup {
  std::vector<CorpusRecord> records;
  Vocab vocab;
  std::vector<PreparedExample> examples;
};

inline SmallSetup small_setup(const RunConfig& cfg, std::size_t count = 12, std::uint64_t seed = 5) {
  SmallSetup s;
  s.records = generate_synthetic_corpus(count, seed);
  s.vocab = build_corpus_vocab(s.records, cfg.vocab);
  s.examples = prepare_examples(s.records, s.vocab, cfg);
  return s;
}

enum class ComposedLoss { generation, contrastive, joint };

/// Gradient check of l_ge, l_con or L over every parameter tensor of a tiny
/// model (each tensor subsampled to at most `per_tensor` entries).
inline GradReport check_composed_loss(ComposedLoss which, std::uint64_t seed, std::size_t per_tensor = 6) {
  const std::size_t vocab = 12;
  SummarizationModel<double> model(tiny_model_config(vocab), seed);
  Rng rng(derive_seed(seed, 7));
  const TinyExample ex = tiny_example(vocab, rng);
  const bool need_con = which != ComposedLoss::generation;
  auto loss = [&]() {
    auto l = model.losses(ex.source, ex.graph, ex.target_in, ex.target_out, true, need_con);
    if (which == ComposedLoss::generation) return l.generation;
    if (which == ComposedLoss::contrastive) return l.contrastive;
    return joint_loss(l.generation, l.contrastive, 1.0);
  };
  std::vector<Tensor<double>> leaves;
  for (const auto& [name, t] : model.params().entries()) {
    const bool contrastive_param = name.rfind("contrastive.", 0) == 0;
    const bool decoder_param = name.rfind("decoder.", 0) == 0;
    if (which == ComposedLoss::generation && contrastive_param) continue;
    if (which == ComposedLoss::contrastive && decoder_param) continue;
    leaves.push_back(t);
  }
  return check_gradients(loss, leaves, per_tensor);
}

// ---------------------------------------------------------------------------
// Relation-graph fixtures and a brute-force oracle

struct GraphFixture {
  std::string name;
  std::vector<std::string> words;
  std::vector<std::string> pieces;  // vocabulary beyond the specials
  std::vector<EntityAnnotation> entities;
  std::vector<DependencyEdge> deps;
  GraphOptions opts;
  std::set<Edge> expected;  // hand-derived edge set
};

inline Vocab fixture_vocab(const GraphFixture& f) {
  std::vector<std::string> tokens = Vocab::special_tokens();
  for (const auto& p : f.pieces)
    if (std::find(tokens.begin(), tokens.end(), p) == tokens.end()) tokens.push_back(p);
  return Vocab(tokens);
}

/// Checks every ordered subword pair against the construction rules directly.
inline std::set<Edge> oracle_edges(const TokenizedText& text, const std::vector<EntityAnnotation>& entities,
                                   const std::vector<DependencyEdge>& deps, const GraphOptions& opts) {
  const std::size_t n = text.size();
  std::vector<int> word_of(n, -1);
  for (std::size_t w = 0; w < text.spans.size(); ++w)
    for (std::size_t i = text.spans[w].first; i < text.spans[w].second; ++i) word_of[i] = static_cast<int>(w);
  auto in_entity_word = [&](int w) {
    return std::any_of(entities.begin(), entities.end(), [&](const EntityAnnotation& e) { return w >= e.start && w < e.end; });
  };

  std::set<Edge> out;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      bool edge = false;
      const int wi = word_of[i], wj = word_of[j];
      for (const auto& e : entities) {
        const bool both = wi >= e.start && wi < e.end && wj >= e.start && wj < e.end;
        if (both && (i + 1 == j || j + 1 == i)) edge = true;
      }
      for (const auto& d : deps) {
        if (d.head < 0) continue;
        const bool touching = in_entity_word(d.head) || in_entity_word(d.dep);
        if (opts.dependency_scope == DependencyScope::entity_touching && !touching) continue;
        const int src = opts.reverse_dependencies ? d.dep : d.head;
        const int dst = opts.reverse_dependencies ? d.head : d.dep;
        if (wi == src && wj == dst) edge = true;
      }
      if (edge) out.emplace(i, j);
    }
  }
  return out;
}

inline std::vector<std::size_t> oracle_key(std::size_t n, const std::set<Edge>& edges) {
  std::vector<std::size_t> key;
  for (std::size_t i = 0; i < n; ++i)
    if (std::any_of(edges.begin(), edges.end(), [&](const Edge& e) { return e.first == i || e.second == i; }))
      key.push_back(i);
  return key;
}

inline std::vector<GraphFixture> graph_fixtures() {
  using ET = EntityType;
  std::vector<GraphFixture> fx;

  // "opacity" splits into op ##acity; the two pieces link both ways.
  fx.push_back({"opacity_split",
                {"there", "is", "a", "focal", "opacity"},
                {"there", "is", "a", "focal", "op", "##acity"},
                {{4, 5, ET::observation}},
                {{4, 3, "amod"}, {-1, 4, "root"}},
                {},
                {{4, 5}, {5, 4}, {4, 3}, {5, 3}}});

  // bilateral(0) small(1) pleural(2) effusions(3): bi ##lateral small pleural eff ##usions
  fx.push_back({"bilateral_small_pleural_effusions",
                {"bilateral", "small", "pleural", "effusions"},
                {"bi", "##lateral", "small", "pleural", "eff", "##usions"},
                {{0, 1, ET::anatomy_modifier}, {1, 2, ET::observation_modifier}, {2, 4, ET::observation}},
                {{3, 0, "amod"}, {3, 1, "amod"}, {3, 2, "compound"}, {-1, 3, "root"}},
                {},
                {{0, 1}, {1, 0}, {3, 4}, {4, 3}, {4, 5}, {5, 4},
                 {4, 0}, {4, 1}, {5, 0}, {5, 1}, {4, 2}, {5, 2}, {4, 3}, {5, 3}}});

  // No annotations at all.
  fx.push_back({"unannotated", {"the", "heart", "is", "normal"}, {"the", "heart", "is", "normal"}, {}, {}, {}, {}});

  // Arc between two non-entity words is dropped under the default scope.
  fx.push_back({"non_entity_arc_dropped",
                {"lungs", "are", "clear", "today"},
                {"lungs", "are", "clear", "today"},
                {{0, 1, ET::anatomy}},
                {{2, 3, "advmod"}, {2, 0, "nsubj"}},
                {},
                {{2, 0}}});

  // Same record with every arc kept.
  fx.push_back({"all_arcs_scope",
                {"lungs", "are", "clear", "today"},
                {"lungs", "are", "clear", "today"},
                {{0, 1, ET::anatomy}},
                {{2, 3, "advmod"}, {2, 0, "nsubj"}},
                {DependencyScope::all, false},
                {{2, 3}, {2, 0}}});

  // Reversed arcs point dependent -> head.
  fx.push_back({"reversed_arcs",
                {"there", "is", "a", "focal", "opacity"},
                {"there", "is", "a", "focal", "op", "##acity"},
                {{4, 5, ET::observation}},
                {{4, 3, "amod"}},
                {DependencyScope::entity_touching, true},
                {{4, 5}, {5, 4}, {3, 4}, {3, 5}}});

  // Multi-word entity whose pieces chain across the word boundary.
  fx.push_back({"cardiomediastinal_silhouette",
                {"the", "cardiomediastinal", "silhouette", "is", "stable"},
                {"the", "cardio", "##mediastinal", "silhouette", "is", "stable"},
                {{1, 3, ET::anatomy}},
                {{2, 0, "det"}, {4, 2, "nsubj"}, {-1, 4, "root"}},
                {},
                {{1, 2}, {2, 1}, {2, 3}, {3, 2}, {3, 0}, {5, 3}}});

  // Arc inside an entity coincides with an adjacency edge; the set dedups.
  fx.push_back({"arc_inside_entity",
                {"left", "pleural", "effusion"},
                {"left", "pleural", "effusion"},
                {{0, 3, ET::observation}},
                {{2, 1, "compound"}, {2, 0, "amod"}},
                {},
                {{0, 1}, {1, 0}, {1, 2}, {2, 1}, {2, 0}}});

  // Multi-piece head and multi-piece dependent: full bipartite linking.
  fx.push_back({"multi_piece_arc",
                {"mild", "atelectasis", "noted"},
                {"mi", "##ld", "at", "##elect", "##asis", "noted"},
                {{1, 2, ET::observation}},
                {{1, 0, "amod"}, {2, 1, "nsubj"}},
                {},
                {{2, 3}, {3, 2}, {3, 4}, {4, 3},
                 {2, 0}, {2, 1}, {3, 0}, {3, 1}, {4, 0}, {4, 1},
                 {5, 2}, {5, 3}, {5, 4}}});

  // Small left effusion from the "which is small in size" paraphrase.
  fx.push_back({"which_is_small_in_size",
                {"left", "effusion", "which", "is", "small", "in", "size"},
                {"left", "effusion", "which", "is", "small", "in", "size"},
                {{0, 1, ET::anatomy}, {1, 2, ET::observation}, {4, 5, ET::observation_modifier}},
                {{1, 0, "amod"}, {1, 4, "acl:relcl"}, {4, 2, "nsubj"}, {4, 6, "obl"}, {6, 5, "case"}},
                {},
                {{1, 0}, {1, 4}, {4, 2}, {4, 6}}});
  return fx;
}

// ---------------------------------------------------------------------------
// Minimal DOT validator for the subset export_dot emits

struct DotSummary {
  bool ok = false;
  std::string error;
  std::size_t nodes = 0;
  std::set<Edge> edges;
  std::set<std::size_t> filled;
};

inline DotSummary parse_dot(const std::string& text) {
  DotSummary out;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || !std::regex_match(line, std::regex(R"(digraph [A-Za-z_][A-Za-z0-9_]* \{)"))) {
    out.error = "bad header";
    return out;
  }
  const std::regex node(R"re(  n(\d+) \[label="((?:[^"\\]|\\.)*)"(, style=filled, fillcolor=[a-z]+)?\];)re");
  const std::regex edge(R"(  n(\d+) -> n(\d+);)");
  bool closed = false;
  std::set<std::size_t> declared;
  while (std::getline(in, line)) {
    std::smatch m;
    if (closed) {
      out.error = "content after closing brace";
      return out;
    }
    if (line == "}") {
      closed = true;
    } else if (std::regex_match(line, m, node)) {
      const std::size_t id = std::stoul(m[1]);
      if (!declared.insert(id).second) {
        out.error = "node declared twice";
        return out;
      }
      if (m[3].matched) out.filled.insert(id);
    } else if (std::regex_match(line, m, edge)) {
      const std::size_t s = std::stoul(m[1]), t = std::stoul(m[2]);
      if (!declared.count(s) || !declared.count(t)) {
        out.error = "edge to undeclared node";
        return out;
      }
      out.edges.emplace(s, t);
    } else {
      out.error = "unrecognized line: " + line;
      return out;
    }
  }
  if (!closed) {
    out.error = "missing closing brace";
    return out;
  }
  out.nodes = declared.size();
  out.ok = true;
  return out;
}

}  // namespace gcl::testing
