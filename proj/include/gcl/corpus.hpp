#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gcl/graph.hpp"
#include "gcl/rng.hpp"
#include "gcl/tokenizer.hpp"

namespace gcl {

/// Input rejected for structural reasons; the message names record and field.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kMinFindingsWords = 10;
inline constexpr std::size_t kMinImpressionWords = 2;

struct CorpusRecord {
  std::string id;
  std::string findings;
  std::string impression;
  std::vector<std::string> words;
  std::vector<EntityAnnotation> entities;
  std::vector<DependencyEdge> dependencies;
  std::string annotator;  // empty when annotations shipped with the data
};

/// Impression tokens that count as words (punctuation excluded).
inline std::size_t content_word_count(const std::vector<std::string>& tokens) {
  return static_cast<std::size_t>(std::count_if(tokens.begin(), tokens.end(), [](const std::string& t) {
    return std::any_of(t.begin(), t.end(), [](unsigned char c) { return std::isalnum(c); });
  }));
}

enum class RejectKind { malformed, filtered };

struct Rejection {
  std::size_t line = 0;
  std::string id;
  RejectKind kind = RejectKind::malformed;
  std::string reason;
};

struct IngestReport {
  std::vector<CorpusRecord> records;
  std::vector<Rejection> rejections;

  std::size_t malformed() const {
    return static_cast<std::size_t>(std::count_if(rejections.begin(), rejections.end(),
                                                  [](const Rejection& r) { return r.kind == RejectKind::malformed; }));
  }
};

/// Checks a record against its invariants; nullopt when valid.
inline std::optional<Rejection> check_record(const CorpusRecord& r) {
  auto reject = [&](RejectKind kind, std::string why) { return Rejection{0, r.id, kind, std::move(why)}; };
  if (r.id.empty()) return reject(RejectKind::malformed, "field 'id' is empty");
  if (r.words.empty()) return reject(RejectKind::malformed, "field 'words' is empty");
  if (r.impression.empty()) return reject(RejectKind::malformed, "field 'impression' is empty");
  try {
    validate_annotations(r.words.size(), r.entities, r.dependencies);
  } catch (const std::out_of_range& e) {
    return reject(RejectKind::malformed, e.what());
  }
  if (r.words.size() < kMinFindingsWords) {
    return reject(RejectKind::filtered,
                  "findings has " + std::to_string(r.words.size()) + " words (< " + std::to_string(kMinFindingsWords) + ")");
  }
  const std::size_t iw = content_word_count(normalize_text(r.impression));
  if (iw < kMinImpressionWords) {
    return reject(RejectKind::filtered,
                  "impression has " + std::to_string(iw) + " words (< " + std::to_string(kMinImpressionWords) + ")");
  }
  return std::nullopt;
}

inline nlohmann::ordered_json record_to_json(const CorpusRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["findings"] = r.findings;
  j["impression"] = r.impression;
  j["words"] = r.words;
  auto ents = nlohmann::ordered_json::array();
  for (const auto& e : r.entities) {
    nlohmann::ordered_json o;
    o["start"] = e.start;
    o["end"] = e.end;
    o["type"] = std::string(to_string(e.type));
    ents.push_back(std::move(o));
  }
  j["entities"] = std::move(ents);
  auto deps = nlohmann::ordered_json::array();
  for (const auto& d : r.dependencies) {
    nlohmann::ordered_json o;
    o["head"] = d.head;
    o["dep"] = d.dep;
    o["rel"] = d.rel;
    deps.push_back(std::move(o));
  }
  j["dependencies"] = std::move(deps);
  if (!r.annotator.empty()) j["annotator"] = r.annotator;
  return j;
}

/// Parses one JSONL object. Missing `words` are derived from the findings
/// text; missing annotation lists are empty. Throws ValidationError naming the
/// record and field for type errors.
inline CorpusRecord record_from_json(const nlohmann::json& j) {
  CorpusRecord r;
  auto where = [&](const std::string& field) { return "record '" + r.id + "': field '" + field + "'"; };
  try {
    if (!j.is_object()) throw ValidationError("record is not a JSON object");
    if (!j.contains("id")) throw ValidationError("record without field 'id'");
    r.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
    if (!j.contains("findings") || !j.at("findings").is_string()) throw ValidationError(where("findings") + " missing or not a string");
    if (!j.contains("impression") || !j.at("impression").is_string()) throw ValidationError(where("impression") + " missing or not a string");
    r.findings = j.at("findings").get<std::string>();
    r.impression = j.at("impression").get<std::string>();
    if (j.contains("words")) {
      for (const auto& w : j.at("words")) {
        if (!w.is_string()) throw ValidationError(where("words") + " contains a non-string");
        r.words.push_back(lowercase(w.get<std::string>()));
      }
    } else {
      r.words = normalize_text(r.findings);
    }
    if (j.contains("entities")) {
      std::size_t i = 0;
      for (const auto& e : j.at("entities")) {
        const std::string f = "entities[" + std::to_string(i++) + "]";
        if (!e.contains("start") || !e.contains("end") || !e.contains("type")) throw ValidationError(where(f) + " needs start, end and type");
        auto type = parse_entity_type(e.at("type").get<std::string>());
        if (!type) throw ValidationError(where(f + ".type") + " unknown entity type '" + e.at("type").get<std::string>() + "'");
        r.entities.push_back({e.at("start").get<int>(), e.at("end").get<int>(), *type});
      }
    }
    if (j.contains("dependencies")) {
      std::size_t i = 0;
      for (const auto& d : j.at("dependencies")) {
        const std::string f = "dependencies[" + std::to_string(i++) + "]";
        if (!d.contains("head") || !d.contains("dep")) throw ValidationError(where(f) + " needs head and dep");
        r.dependencies.push_back({d.at("head").get<int>(), d.at("dep").get<int>(), d.value("rel", std::string("dep"))});
      }
    }
    if (j.contains("annotator")) r.annotator = j.at("annotator").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("record '" + r.id + "': " + e.what());
  }
  return r;
}

/// Reads JSONL, sorting records into accepted and rejected. Blank lines are
/// skipped; unparseable lines are malformed rejections.
inline IngestReport ingest_corpus(std::istream& in) {
  IngestReport report;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    CorpusRecord rec;
    try {
      rec = record_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      report.rejections.push_back({lineno, "", RejectKind::malformed, std::string("invalid JSON: ") + e.what()});
      continue;
    } catch (const ValidationError& e) {
      report.rejections.push_back({lineno, "", RejectKind::malformed, e.what()});
      continue;
    }
    if (auto rej = check_record(rec)) {
      rej->line = lineno;
      rej->reason = "record '" + rec.id + "': " + rej->reason;
      report.rejections.push_back(std::move(*rej));
    } else {
      report.records.push_back(std::move(rec));
    }
  }
  return report;
}

inline IngestReport ingest_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  return ingest_corpus(in);
}

/// Ingests and fails on any malformed record. Filtered (too short) records
/// are dropped.
inline std::vector<CorpusRecord> load_corpus_strict(const std::string& path) {
  IngestReport rep = ingest_corpus_file(path);
  for (const auto& r : rep.rejections)
    if (r.kind == RejectKind::malformed) throw ValidationError(path + ":" + std::to_string(r.line) + ": " + r.reason);
  if (rep.records.empty()) throw ValidationError(path + ": no usable records");
  return std::move(rep.records);
}

inline void write_corpus(std::ostream& out, const std::vector<CorpusRecord>& records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Heuristic annotator

using Lexicon = std::map<std::vector<std::string>, EntityType>;

/// `term<TAB>type` per line; terms are normalized like findings text.
inline Lexicon load_lexicon(std::istream& in) {
  Lexicon lex;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ValidationError("lexicon line " + std::to_string(lineno) + ": expected term<TAB>type");
    auto type = parse_entity_type(line.substr(tab + 1));
    if (!type) throw ValidationError("lexicon line " + std::to_string(lineno) + ": unknown entity type '" + line.substr(tab + 1) + "'");
    auto term = normalize_text(line.substr(0, tab));
    if (term.empty()) throw ValidationError("lexicon line " + std::to_string(lineno) + ": empty term");
    lex[std::move(term)] = *type;
  }
  return lex;
}

inline bool is_modifier(EntityType t) {
  return t == EntityType::anatomy_modifier || t == EntityType::observation_modifier;
}

namespace detail {

inline bool adjective_like(const std::string& w, const Lexicon& lex) {
  auto it = lex.find({w});
  if (it != lex.end()) return is_modifier(it->second);
  static const std::set<std::string> common{"small", "large", "mild", "moderate", "severe", "minimal", "trace",
                                            "new",   "old",   "tiny", "focal",    "diffuse", "patchy", "subtle"};
  if (common.count(w)) return true;
  static const std::vector<std::string> suffixes{"al", "ic", "ous", "ive", "ar", "ary", "ent", "ant", "ful"};
  for (const auto& s : suffixes)
    if (w.size() > s.size() + 2 && w.compare(w.size() - s.size(), s.size(), s) == 0) return true;
  return false;
}

}  // namespace detail

struct Annotations {
  std::vector<EntityAnnotation> entities;
  std::vector<DependencyEdge> dependencies;
};

/// Lexicon spans become entities (longest match first, ties to the leftmost).
/// Each run of adjective-like words directly before an anatomy or observation
/// entity is attached to that entity's last word as dependents.
inline Annotations heuristic_annotate(const std::vector<std::string>& words, const Lexicon& lex) {
  struct Match {
    int start, len;
    EntityType type;
  };
  std::vector<Match> cands;
  for (int i = 0; i < static_cast<int>(words.size()); ++i) {
    for (const auto& [term, type] : lex) {
      const int len = static_cast<int>(term.size());
      if (i + len > static_cast<int>(words.size())) continue;
      if (std::equal(term.begin(), term.end(), words.begin() + i)) cands.push_back({i, len, type});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Match& a, const Match& b) {
    return a.len != b.len ? a.len > b.len : a.start < b.start;
  });
  std::vector<bool> taken(words.size(), false);
  Annotations out;
  for (const auto& m : cands) {
    bool free = true;
    for (int k = m.start; k < m.start + m.len; ++k) free = free && !taken[k];
    if (!free) continue;
    for (int k = m.start; k < m.start + m.len; ++k) taken[k] = true;
    out.entities.push_back({m.start, m.start + m.len, m.type});
  }
  std::sort(out.entities.begin(), out.entities.end(),
            [](const EntityAnnotation& a, const EntityAnnotation& b) { return a.start < b.start; });

  std::vector<int> entity_of(words.size(), -1);
  for (std::size_t e = 0; e < out.entities.size(); ++e)
    for (int k = out.entities[e].start; k < out.entities[e].end; ++k) entity_of[k] = static_cast<int>(e);

  for (const auto& e : out.entities) {
    if (is_modifier(e.type)) continue;
    const int head = e.end - 1;
    for (int k = e.start - 1; k >= 0; --k) {
      const int owner = entity_of[k];
      if (owner >= 0 && !is_modifier(out.entities[owner].type)) break;
      if (!detail::adjective_like(words[k], lex)) break;
      out.dependencies.push_back({head, k, "amod"});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic corpus

namespace detail {

struct SynthPhrase {
  std::vector<std::string> words;
  EntityType type;
};

inline const std::vector<std::string>& synth_severity() {
  static const std::vector<std::string> v{"small", "large", "mild", "moderate", "severe", "minimal", "trace"};
  return v;
}
inline const std::vector<std::string>& synth_side() {
  static const std::vector<std::string> v{"left", "right", "bilateral"};
  return v;
}
inline const std::vector<std::vector<std::string>>& synth_anatomy() {
  static const std::vector<std::vector<std::string>> v{{"pleural"}, {"basilar"}, {"apical"},
                                                       {"lower", "lobe"}, {"upper", "lobe"}, {"perihilar"}};
  return v;
}
inline const std::vector<std::string>& synth_observation() {
  static const std::vector<std::string> v{"effusion", "opacity", "atelectasis", "consolidation",
                                          "edema",    "nodule",  "scarring"};
  return v;
}
inline const std::vector<std::vector<std::string>>& synth_fillers() {
  static const std::vector<std::vector<std::string>> v{
      {"the", "heart", "size", "is", "normal", "."},
      {"the", "mediastinal", "contours", "are", "unremarkable", "."},
      {"no", "acute", "osseous", "abnormality", "is", "seen", "."},
      {"the", "visualized", "bones", "are", "intact", "."},
      {"there", "has", "been", "no", "interval", "change", "."},
      {"the", "trachea", "is", "midline", "."},
      {"degenerative", "changes", "of", "the", "spine", "are", "noted", "."},
      {"the", "hila", "appear", "stable", "."}};
  return v;
}

}  // namespace detail

/// Template-sampled records with gold entities and dependencies. Each
/// impression lists the sampled key phrases as "<severity> <side> <anatomy>
/// <observation>"; filler sentences never reach the impression.
inline std::vector<CorpusRecord> generate_synthetic_corpus(std::size_t count, std::uint64_t seed) {
  if (count == 0) throw std::invalid_argument("generate_synthetic_corpus: count must be >= 1");
  Rng rng(seed);
  const auto& sev = detail::synth_severity();
  const auto& side = detail::synth_side();
  const auto& anat = detail::synth_anatomy();
  const auto& obs = detail::synth_observation();
  const auto& fill = detail::synth_fillers();

  std::vector<CorpusRecord> out;
  for (std::size_t n = 0; n < count; ++n) {
    CorpusRecord r;
    r.id = "synth-" + std::to_string(seed) + "-" + std::to_string(n);
    std::vector<std::string> impression_words;
    auto push_word = [&](const std::string& w) {
      r.words.push_back(w);
      return static_cast<int>(r.words.size() - 1);
    };
    auto add_filler = [&] {
      const auto& f = fill[rng.below(fill.size())];
      const int base = static_cast<int>(r.words.size());
      for (const auto& w : f) push_word(w);
      // flat analysis: second word heads the sentence, the rest attach to it
      const int root = base + 1;
      r.dependencies.push_back({-1, root, "root"});
      for (int k = 0; k < static_cast<int>(f.size()); ++k)
        if (base + k != root) r.dependencies.push_back({root, base + k, k + 1 == static_cast<int>(f.size()) ? "punct" : "dep"});
    };

    const std::size_t key_sentences = 1 + rng.below(2);
    const std::size_t fillers_before = rng.below(2);
    std::size_t fillers_after = 2 + rng.below(2);
    for (std::size_t f = 0; f < fillers_before; ++f) add_filler();
    std::set<std::string> used_obs;
    for (std::size_t k = 0; k < key_sentences; ++k) {
      const std::string& s_sev = sev[rng.below(sev.size())];
      const std::string& s_side = side[rng.below(side.size())];
      const auto& s_anat = anat[rng.below(anat.size())];
      std::string s_obs = obs[rng.below(obs.size())];
      while (used_obs.count(s_obs)) s_obs = obs[rng.below(obs.size())];
      used_obs.insert(s_obs);
      const bool relative = rng.below(2) == 1;

      const int there = push_word("there");
      const int is = push_word("is");
      const int det = push_word("a");
      int w_sev = -1;
      if (!relative) w_sev = push_word(s_sev);
      const int w_side = push_word(s_side);
      const int w_anat0 = static_cast<int>(r.words.size());
      for (const auto& w : s_anat) push_word(w);
      const int w_anat_end = static_cast<int>(r.words.size());
      const int w_obs = push_word(s_obs);
      r.dependencies.push_back({-1, is, "root"});
      r.dependencies.push_back({is, there, "expl"});
      r.dependencies.push_back({is, w_obs, "nsubj"});
      r.dependencies.push_back({w_obs, det, "det"});
      r.dependencies.push_back({w_obs, w_side, "amod"});
      for (int a = w_anat0; a < w_anat_end; ++a) r.dependencies.push_back({w_obs, a, "compound"});
      r.entities.push_back({w_side, w_side + 1, EntityType::anatomy_modifier});
      r.entities.push_back({w_anat0, w_anat_end, EntityType::anatomy});
      r.entities.push_back({w_obs, w_obs + 1, EntityType::observation});
      if (relative) {
        const int which = push_word("which");
        const int cop = push_word("is");
        w_sev = push_word(s_sev);
        const int in = push_word("in");
        const int size = push_word("size");
        r.dependencies.push_back({w_obs, w_sev, "acl:relcl"});
        r.dependencies.push_back({w_sev, which, "nsubj"});
        r.dependencies.push_back({w_sev, cop, "cop"});
        r.dependencies.push_back({w_sev, size, "obl"});
        r.dependencies.push_back({size, in, "case"});
      } else {
        r.dependencies.push_back({w_obs, w_sev, "amod"});
      }
      r.entities.push_back({w_sev, w_sev + 1, EntityType::observation_modifier});
      const int stop = push_word(".");
      r.dependencies.push_back({is, stop, "punct"});

      if (!impression_words.empty()) impression_words.push_back(".");
      impression_words.push_back(s_sev);
      impression_words.push_back(s_side);
      for (const auto& w : s_anat) impression_words.push_back(w);
      impression_words.push_back(s_obs);
    }
    while (r.words.size() < kMinFindingsWords || fillers_after > 0) {
      add_filler();
      if (fillers_after > 0) --fillers_after;
    }
    std::sort(r.entities.begin(), r.entities.end(),
              [](const EntityAnnotation& a, const EntityAnnotation& b) { return a.start < b.start; });
    std::ostringstream findings, impression;
    for (std::size_t i = 0; i < r.words.size(); ++i) {
      if (i && r.words[i] != ".") findings << ' ';
      findings << r.words[i];
    }
    for (std::size_t i = 0; i < impression_words.size(); ++i) {
      if (i && impression_words[i] != ".") impression << ' ';
      impression << impression_words[i];
    }
    impression << '.';
    r.findings = findings.str();
    r.impression = impression.str();
    out.push_back(std::move(r));
  }
  return out;
}

/// FNV-1a over the serialized corpus.
inline std::uint64_t corpus_hash(const std::vector<CorpusRecord>& records) {
  std::ostringstream os;
  write_corpus(os, records);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace gcl
