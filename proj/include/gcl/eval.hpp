#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gcl/training.hpp"

namespace gcl {

/// Precision, recall and F1 on a 0-100 scale.
struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

namespace detail {

inline RougeScore rouge_from_counts(double overlap, double cand_total, double ref_total) {
  RougeScore s;
  s.precision = cand_total > 0 ? 100.0 * overlap / cand_total : 0.0;
  s.recall = ref_total > 0 ? 100.0 * overlap / ref_total : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

}  // namespace detail

/// Lowercased words with punctuation removed; no stemming.
inline std::vector<std::string> rouge_tokens(const std::string& text) {
  std::vector<std::string> out;
  for (auto& t : normalize_text(text))
    if (std::any_of(t.begin(), t.end(), [](unsigned char c) { return std::isalnum(c); })) out.push_back(std::move(t));
  return out;
}

/// Clipped n-gram overlap.
inline RougeScore rouge_n(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
                          std::size_t n) {
  if (n < 1) throw std::invalid_argument("rouge_n: n must be >= 1");
  auto grams = [n](const std::vector<std::string>& words) {
    std::map<std::vector<std::string>, std::size_t> counts;
    for (std::size_t i = 0; i + n <= words.size(); ++i) ++counts[{words.begin() + i, words.begin() + i + n}];
    return counts;
  };
  const auto c = grams(candidate);
  const auto r = grams(reference);
  std::size_t overlap = 0, ct = 0, rt = 0;
  for (const auto& [g, k] : c) {
    ct += k;
    if (auto it = r.find(g); it != r.end()) overlap += std::min(k, it->second);
  }
  for (const auto& [g, k] : r) rt += k;
  return detail::rouge_from_counts(double(overlap), double(ct), double(rt));
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline RougeScore rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference) {
  const double l = double(lcs_length(candidate, reference));
  return detail::rouge_from_counts(l, double(candidate.size()), double(reference.size()));
}

struct ExampleScore {
  std::string id;
  std::string hypothesis;
  std::size_t findings_words = 0;
  double r1 = 0.0, r2 = 0.0, rl = 0.0;
};

struct BucketStat {
  std::size_t lo = 0;
  std::optional<std::size_t> hi;  // exclusive; none for the open last bucket
  std::size_t count = 0;
  double mean_r1 = 0.0;
};

struct CorpusReport {
  double r1 = 0.0, r2 = 0.0, rl = 0.0;
  std::size_t count = 0;
  std::vector<BucketStat> buckets;  // only non-empty buckets
  std::vector<ExampleScore> examples;

  nlohmann::ordered_json summary_json() const {
    nlohmann::ordered_json j;
    j["record"] = "summary";
    j["count"] = count;
    j["R-1"] = r1;
    j["R-2"] = r2;
    j["R-L"] = rl;
    return j;
  }
};

/// Half-open findings-length groups: [0, e0), [e0, e1), ..., [e_last, inf).
inline std::size_t bucket_of(std::size_t words, const std::vector<std::size_t>& edges) {
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), words) - edges.begin());
}

/// Scores hypotheses against references and aggregates.
inline CorpusReport score_predictions(const std::vector<ExampleScore>& inputs_with_ids,
                                      const std::vector<std::vector<std::string>>& hypotheses,
                                      const std::vector<std::vector<std::string>>& references,
                                      const std::vector<std::size_t>& edges) {
  if (hypotheses.size() != references.size() || inputs_with_ids.size() != references.size())
    throw std::invalid_argument("score_predictions: size mismatch");
  CorpusReport rep;
  rep.count = references.size();
  std::vector<double> bucket_sum(edges.size() + 1, 0.0);
  std::vector<std::size_t> bucket_n(edges.size() + 1, 0);
  for (std::size_t i = 0; i < references.size(); ++i) {
    ExampleScore s = inputs_with_ids[i];
    s.r1 = rouge_n(hypotheses[i], references[i], 1).f1;
    s.r2 = rouge_n(hypotheses[i], references[i], 2).f1;
    s.rl = rouge_l(hypotheses[i], references[i]).f1;
    rep.r1 += s.r1;
    rep.r2 += s.r2;
    rep.rl += s.rl;
    const std::size_t b = bucket_of(s.findings_words, edges);
    bucket_sum[b] += s.r1;
    ++bucket_n[b];
    rep.examples.push_back(std::move(s));
  }
  if (rep.count) {
    rep.r1 /= double(rep.count);
    rep.r2 /= double(rep.count);
    rep.rl /= double(rep.count);
  }
  for (std::size_t b = 0; b <= edges.size(); ++b) {
    if (bucket_n[b] == 0) continue;
    BucketStat st;
    st.lo = b == 0 ? 0 : edges[b - 1];
    if (b < edges.size()) st.hi = edges[b];
    st.count = bucket_n[b];
    st.mean_r1 = bucket_sum[b] / double(bucket_n[b]);
    rep.buckets.push_back(st);
  }
  return rep;
}

/// Generates an impression for every example and scores it.
template <class T>
CorpusReport evaluate_corpus(const Trainer<T>& trainer, const std::vector<PreparedExample>& examples,
                             const GenerationParams& gen, const std::vector<std::size_t>& edges) {
  if (trainer.model().config().vocab_size != trainer.vocab().size())
    throw std::invalid_argument("evaluate: model and vocabulary sizes differ");
  std::vector<ExampleScore> meta;
  std::vector<std::vector<std::string>> hyps, refs;
  for (const auto& ex : examples) {
    const auto ids = trainer.generate(ex, gen);
    ExampleScore s;
    s.id = ex.id;
    s.findings_words = ex.findings_words;
    s.hypothesis = decode_ids(ids, trainer.vocab());
    hyps.push_back(rouge_tokens(s.hypothesis));
    std::string ref;
    for (const auto& w : ex.reference) ref += w + ' ';
    refs.push_back(rouge_tokens(ref));
    meta.push_back(std::move(s));
  }
  return score_predictions(meta, hyps, refs, edges);
}

inline std::string format_bucket(const BucketStat& b) {
  return "[" + std::to_string(b.lo) + ", " + (b.hi ? std::to_string(*b.hi) : std::string("inf")) + ")";
}

/// Line-delimited records: one summary, one per non-empty bucket.
inline std::string report_jsonl(const CorpusReport& rep) {
  std::ostringstream os;
  os << rep.summary_json().dump() << '\n';
  for (const auto& b : rep.buckets) {
    nlohmann::ordered_json j;
    j["record"] = "bucket";
    j["range"] = format_bucket(b);
    j["count"] = b.count;
    j["R-1"] = b.mean_r1;
    os << j.dump() << '\n';
  }
  return os.str();
}

inline std::string report_table(const CorpusReport& rep) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << std::left << std::setw(14) << "Split" << std::right << std::setw(8) << "Count" << std::setw(8) << "R-1"
     << std::setw(8) << "R-2" << std::setw(8) << "R-L" << '\n';
  os << std::left << std::setw(14) << "all" << std::right << std::setw(8) << rep.count << std::setw(8) << rep.r1
     << std::setw(8) << rep.r2 << std::setw(8) << rep.rl << '\n';
  for (const auto& b : rep.buckets)
    os << std::left << std::setw(14) << format_bucket(b) << std::right << std::setw(8) << b.count << std::setw(8)
       << b.mean_r1 << std::setw(8) << "" << std::setw(8) << "" << '\n';
  return os.str();
}

inline std::string per_example_jsonl(const CorpusReport& rep) {
  std::ostringstream os;
  for (const auto& e : rep.examples) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["hypothesis"] = e.hypothesis;
    j["findings_words"] = e.findings_words;
    j["R-1"] = e.r1;
    j["R-2"] = e.r2;
    j["R-L"] = e.rl;
    os << j.dump() << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationVariant {
  std::string name;
  bool use_graph;
  bool use_contrastive;
};

inline const std::vector<AblationVariant>& ablation_variants() {
  static const std::vector<AblationVariant> v{{"Base", false, false},
                                              {"Base+CL", false, true},
                                              {"Base+graph", true, false},
                                              {"Base+graph+CL", true, true}};
  return v;
}

struct AblationCell {
  std::uint64_t seed = 0;
  std::optional<CorpusReport> report;  // empty on failure
  std::string error;
};

struct AblationRow {
  AblationVariant variant;
  std::vector<AblationCell> runs;

  bool failed() const {
    return std::any_of(runs.begin(), runs.end(), [](const AblationCell& c) { return !c.report; });
  }
  /// Seed-averaged (R-1, R-2, R-L) over successful runs.
  std::optional<std::array<double, 3>> mean() const {
    std::array<double, 3> m{0, 0, 0};
    std::size_t n = 0;
    for (const auto& c : runs) {
      if (!c.report) continue;
      m[0] += c.report->r1;
      m[1] += c.report->r2;
      m[2] += c.report->rl;
      ++n;
    }
    if (n == 0) return std::nullopt;
    for (auto& v : m) v /= double(n);
    return m;
  }
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::size_t train_records = 0;
  std::size_t eval_records = 0;
};

/// Deterministic split: the last `fraction` of records (at least one) are held out.
inline std::pair<std::vector<CorpusRecord>, std::vector<CorpusRecord>> holdout_split(
    const std::vector<CorpusRecord>& records, double fraction) {
  if (records.size() < 2 || fraction <= 0.0) return {records, records};
  std::size_t held = static_cast<std::size_t>(std::llround(fraction * double(records.size())));
  held = std::clamp<std::size_t>(held, 1, records.size() - 1);
  return {{records.begin(), records.end() - held}, {records.end() - held, records.end()}};
}

/// Trains every variant for every seed with identical budgets and scores it
/// on the held-out split. A failing run is recorded, not propagated.
inline AblationTable run_ablation(const std::vector<CorpusRecord>& records, const RunConfig& base,
                                  std::size_t num_seeds,
                                  const std::function<void(const std::string&)>& progress = {}) {
  if (records.empty()) throw std::invalid_argument("ablate: empty corpus");
  if (num_seeds < 1) throw std::invalid_argument("ablate: need at least one seed");
  const auto [train_recs, eval_recs] = holdout_split(records, base.eval.holdout_fraction);
  const Vocab vocab = build_corpus_vocab(train_recs, base.vocab);
  const auto train_set = prepare_examples(train_recs, vocab, base);
  const auto eval_set = prepare_examples(eval_recs, vocab, base);

  AblationTable table;
  table.train_records = train_set.size();
  table.eval_records = eval_set.size();
  for (const auto& variant : ablation_variants()) {
    AblationRow row{variant, {}};
    for (std::size_t k = 0; k < num_seeds; ++k) {
      RunConfig cfg = base;
      cfg.train.seed = base.train.seed + k;
      cfg.train.use_graph = variant.use_graph;
      cfg.train.use_contrastive = variant.use_contrastive;
      AblationCell cell;
      cell.seed = cfg.train.seed;
      try {
        Trainer<float> trainer(cfg, vocab);
        trainer.train(train_set);
        cell.report = evaluate_corpus(trainer, eval_set, cfg.generation, cfg.eval.bucket_edges);
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      if (progress) {
        std::ostringstream os;
        os << variant.name << " seed " << cell.seed << ": ";
        if (cell.report) os << std::fixed << std::setprecision(2) << "R-1 " << cell.report->r1;
        else os << "FAILED (" << cell.error << ")";
        progress(os.str());
      }
      row.runs.push_back(std::move(cell));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline std::string ablation_jsonl(const AblationTable& t) {
  std::ostringstream os;
  for (const auto& row : t.rows) {
    nlohmann::ordered_json j;
    j["model"] = row.variant.name;
    j["use_graph"] = row.variant.use_graph;
    j["use_contrastive"] = row.variant.use_contrastive;
    if (auto m = row.mean()) {
      j["R-1"] = (*m)[0];
      j["R-2"] = (*m)[1];
      j["R-L"] = (*m)[2];
    }
    j["failed"] = row.failed();
    auto seeds = nlohmann::ordered_json::array();
    for (const auto& c : row.runs) {
      nlohmann::ordered_json s;
      s["seed"] = c.seed;
      if (c.report) {
        s["R-1"] = c.report->r1;
        s["R-2"] = c.report->r2;
        s["R-L"] = c.report->rl;
      } else {
        s["error"] = c.error;
      }
      seeds.push_back(std::move(s));
    }
    j["per_seed"] = std::move(seeds);
    os << j.dump() << '\n';
  }
  return os.str();
}

inline std::string ablation_table_text(const AblationTable& t) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << std::left << std::setw(16) << "Model" << std::right << std::setw(8) << "R-1" << std::setw(8) << "R-2"
     << std::setw(8) << "R-L" << '\n';
  for (const auto& row : t.rows) {
    os << std::left << std::setw(16) << row.variant.name << std::right;
    if (auto m = row.mean()) os << std::setw(8) << (*m)[0] << std::setw(8) << (*m)[1] << std::setw(8) << (*m)[2];
    else os << std::setw(8) << "FAILED" << std::setw(8) << "-" << std::setw(8) << "-";
    if (row.failed() && row.mean()) os << "  (partial: some seeds failed)";
    os << '\n';
  }
  if (!t.rows.empty() && t.rows[0].runs.size() > 1) {
    os << "\nper seed R-1:\n";
    for (const auto& row : t.rows) {
      os << std::left << std::setw(16) << row.variant.name << std::right;
      for (const auto& c : row.runs) {
        if (c.report) os << std::setw(8) << c.report->r1;
        else os << std::setw(8) << "FAILED";
      }
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace gcl
