#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gcl/tokenizer.hpp"

namespace gcl {

enum class EntityType { anatomy, observation, anatomy_modifier, observation_modifier };

inline std::string_view to_string(EntityType t) {
  switch (t) {
    case EntityType::anatomy: return "anatomy";
    case EntityType::observation: return "observation";
    case EntityType::anatomy_modifier: return "anatomy_modifier";
    case EntityType::observation_modifier: return "observation_modifier";
  }
  return "?";
}

inline std::optional<EntityType> parse_entity_type(std::string_view s) {
  if (s == "anatomy") return EntityType::anatomy;
  if (s == "observation") return EntityType::observation;
  if (s == "anatomy_modifier") return EntityType::anatomy_modifier;
  if (s == "observation_modifier") return EntityType::observation_modifier;
  return std::nullopt;
}

/// Word span [start, end) tagged with one of the four entity types.
struct EntityAnnotation {
  int start = 0;
  int end = 0;
  EntityType type = EntityType::observation;

  bool operator==(const EntityAnnotation&) const = default;
};

/// Dependency arc between words; head == -1 marks the root and is ignored.
struct DependencyEdge {
  int head = -1;
  int dep = 0;
  std::string rel;

  bool operator==(const DependencyEdge&) const = default;
};

enum class DependencyScope { entity_touching, all };

struct GraphOptions {
  DependencyScope dependency_scope = DependencyScope::entity_touching;
  /// Point dependency edges dependent -> head instead of head -> dependent.
  bool reverse_dependencies = false;
};

using Edge = std::pair<std::size_t, std::size_t>;

/// Directed subword graph with its key-node set.
struct RelationGraph {
  std::size_t n = 0;
  std::set<Edge> edges;
  std::vector<std::size_t> key;

  bool empty() const { return edges.empty(); }
  bool is_key(std::size_t i) const { return std::binary_search(key.begin(), key.end(), i); }
};

/// Sorted unique node indices incident to at least one edge.
inline std::vector<std::size_t> key_token_indices(const RelationGraph& graph) {
  std::set<std::size_t> nodes;
  for (const auto& [s, t] : graph.edges) {
    nodes.insert(s);
    nodes.insert(t);
  }
  return {nodes.begin(), nodes.end()};
}

/// Checks annotations against the word count; the message names the first
/// offending annotation.
inline void validate_annotations(std::size_t word_count, const std::vector<EntityAnnotation>& entities,
                                 const std::vector<DependencyEdge>& deps) {
  const int wc = static_cast<int>(word_count);
  for (std::size_t i = 0; i < entities.size(); ++i) {
    const auto& e = entities[i];
    if (e.start < 0 || e.start >= e.end || e.end > wc) {
      throw std::out_of_range("entities[" + std::to_string(i) + "] span [" + std::to_string(e.start) + ", " +
                              std::to_string(e.end) + ") invalid for " + std::to_string(word_count) + " words");
    }
  }
  for (std::size_t i = 0; i < deps.size(); ++i) {
    const auto& d = deps[i];
    if (d.dep < 0 || d.dep >= wc) {
      throw std::out_of_range("dependencies[" + std::to_string(i) + "] dependent " + std::to_string(d.dep) +
                              " outside " + std::to_string(word_count) + " words");
    }
    if (d.head < -1 || d.head >= wc) {
      throw std::out_of_range("dependencies[" + std::to_string(i) + "] head " + std::to_string(d.head) + " outside " +
                              std::to_string(word_count) + " words");
    }
    if (d.head == d.dep) {
      throw std::out_of_range("dependencies[" + std::to_string(i) + "] head equals dependent (" +
                              std::to_string(d.dep) + ")");
    }
  }
}

/// Builds the relation graph over subwords.
///
/// Within each entity, adjacent subwords are linked in both directions. For a
/// dependency arc that touches an entity (or any arc, under
/// DependencyScope::all) every subword of the head word is linked to every
/// subword of the dependent word. Edges form a set; self-loops never appear.
inline RelationGraph build_relation_graph(const TokenizedText& text, const std::vector<EntityAnnotation>& entities,
                                          const std::vector<DependencyEdge>& deps, const GraphOptions& opts = {}) {
  validate_annotations(text.spans.size(), entities, deps);
  RelationGraph g;
  g.n = text.size();

  for (const auto& e : entities) {
    const std::size_t first = text.spans[e.start].first;
    const std::size_t last = text.spans[e.end - 1].second;
    for (std::size_t i = first; i + 1 < last; ++i) {
      g.edges.emplace(i, i + 1);
      g.edges.emplace(i + 1, i);
    }
  }

  std::vector<bool> in_entity(text.spans.size(), false);
  for (const auto& e : entities)
    for (int w = e.start; w < e.end; ++w) in_entity[w] = true;

  for (const auto& d : deps) {
    if (d.head < 0) continue;
    if (opts.dependency_scope == DependencyScope::entity_touching && !in_entity[d.head] && !in_entity[d.dep]) continue;
    const auto [hs, he] = text.spans[d.head];
    const auto [ds, de] = text.spans[d.dep];
    for (std::size_t h = hs; h < he; ++h) {
      for (std::size_t t = ds; t < de; ++t) {
        if (opts.reverse_dependencies) g.edges.emplace(t, h);
        else g.edges.emplace(h, t);
      }
    }
  }
  g.key = key_token_indices(g);
  return g;
}

namespace detail {

inline std::string dot_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace detail

/// Graphviz DOT rendering: one node line per subword (key nodes filled), one
/// edge line per directed edge.
inline std::string export_dot(const RelationGraph& graph, const TokenizedText& text) {
  if (text.size() != graph.n) throw std::invalid_argument("export_dot: tokenization does not match graph size");
  std::ostringstream os;
  os << "digraph relation_graph {\n";
  for (std::size_t i = 0; i < graph.n; ++i) {
    os << "  n" << i << " [label=\"" << detail::dot_escape(text.pieces[i]) << '"';
    if (graph.is_key(i)) os << ", style=filled, fillcolor=lightblue";
    os << "];\n";
  }
  for (const auto& [s, t] : graph.edges) os << "  n" << s << " -> n" << t << ";\n";
  os << "}\n";
  return os.str();
}

/// `{"n": int, "edges": [[s,t],...], "key": [int,...]}`
inline nlohmann::json graph_to_json(const RelationGraph& graph) {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [s, t] : graph.edges) edges.push_back({s, t});
  return {{"n", graph.n}, {"edges", edges}, {"key", graph.key}};
}

inline RelationGraph graph_from_json(const nlohmann::json& j) {
  RelationGraph g;
  g.n = j.at("n").get<std::size_t>();
  for (const auto& e : j.at("edges")) {
    const auto s = e.at(0).get<std::size_t>(), t = e.at(1).get<std::size_t>();
    if (s >= g.n || t >= g.n || s == t) throw std::invalid_argument("graph json: invalid edge");
    g.edges.emplace(s, t);
  }
  g.key = key_token_indices(g);
  return g;
}

}  // namespace gcl
