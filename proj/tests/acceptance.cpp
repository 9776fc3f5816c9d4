// Acceptance runner. `acceptance <n>` checks one criterion, `acceptance` runs
// all of them. Each criterion prints one PASS/FAIL line; the exit status is
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gcl_cli.hpp"
#include "support.hpp"

namespace {

using namespace gcl;
using Clock = std::chrono::steady_clock;

// Pinned tolerances and budgets.
constexpr double kGradRel = 1e-4;
constexpr double kGradSeconds = 60.0;
constexpr std::uint64_t kGradSeeds = 5;
constexpr double kLossAbs = 1e-6;
constexpr double kRougeAbs = 0.01;
constexpr double kOverfitLge = 0.1;
constexpr double kOverfitR1 = 95.0;
constexpr double kOverfitSeconds = 300.0;
constexpr double kAblationSeconds = 1800.0;
constexpr std::size_t kAblationRecords = 256;
constexpr std::uint64_t kAblationCorpusSeed = 1;
constexpr std::size_t kAblationSteps = 200;
constexpr std::size_t kAblationSeeds = 3;
constexpr std::size_t kDecodingModels = 50;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// ---------------------------------------------------------------------------

Outcome gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string where;
  std::size_t checks = 0;
  auto take = [&](const std::string& name, std::uint64_t seed, const testing::GradReport& r) {
    checks += r.checked;
    if (r.max_rel_error > worst || !std::isfinite(r.max_rel_error)) {
      worst = r.max_rel_error;
      where = name + " seed " + std::to_string(seed) + " " + r.worst;
    }
  };
  for (const auto& c : testing::primitive_grad_cases())
    for (std::uint64_t s = 0; s < kGradSeeds; ++s) take(c.name, s, c.run(s));
  const std::pair<const char*, testing::ComposedLoss> composed[] = {{"l_ge", testing::ComposedLoss::generation},
                                                                    {"l_con", testing::ComposedLoss::contrastive},
                                                                    {"L", testing::ComposedLoss::joint}};
  for (const auto& [name, which] : composed)
    for (std::uint64_t s = 0; s < kGradSeeds; ++s) take(name, s, testing::check_composed_loss(which, s));
  const double secs = seconds_since(t0);
  const bool pass = worst < kGradRel && secs < kGradSeconds;
  return {pass, "max rel error " + fmt(worst) + " (< " + fmt(kGradRel) + ") at " + where + " over " +
                    std::to_string(checks) + " entries, " + fmt(secs, 3) + " s (< " + fmt(kGradSeconds) + " s)"};
}

Outcome graph_oracle() {
  const auto fixtures = testing::graph_fixtures();
  std::size_t ok = 0;
  std::string bad;
  for (const auto& fx : fixtures) {
    const TokenizedText text = encode_words(fx.words, testing::fixture_vocab(fx));
    const RelationGraph g = build_relation_graph(text, fx.entities, fx.deps, fx.opts);
    const auto oracle = testing::oracle_edges(text, fx.entities, fx.deps, fx.opts);
    if (g.edges == oracle && g.edges == fx.expected && g.key == testing::oracle_key(g.n, oracle)) ++ok;
    else bad += " " + fx.name;
  }
  const bool pass = ok == fixtures.size() && fixtures.size() >= 10;
  return {pass, std::to_string(ok) + "/" + std::to_string(fixtures.size()) +
                    " fixtures match the brute-force oracle and key set" + (bad.empty() ? "" : "; mismatched:" + bad)};
}

Outcome masking_partition() {
  Rng rng(2024);
  std::size_t good = 0;
  const std::size_t trials = 100;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t n = 2 + rng.below(20), d = 1 + rng.below(16);
    const RelationGraph g = testing::random_graph(n, rng, rng.uniform(0.02, 0.3));
    const Tensor<double> s = testing::random_tensor({n, d}, rng);
    const auto pair = generate_examples(s, g);
    auto masked = [&](const Tensor<double>& x, std::size_t i) {
      for (std::size_t j = 0; j < d; ++j)
        if (x.at(i, j) != kMaskValue) return false;
      return true;
    };
    auto same_row = [&](const Tensor<double>& x, std::size_t i) {
      return std::memcmp(x.values().data() + i * d, s.values().data() + i * d, d * sizeof(double)) == 0;
    };
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i) {
      const bool in_p = masked(pair.positive, i), in_n = masked(pair.negative, i);
      ok = ok && (in_p != in_n);          // disjoint and exhaustive
      ok = ok && (in_n == g.is_key(i));   // negative masks exactly K, positive its complement
      ok = ok && (in_p || same_row(pair.positive, i)) && (in_n || same_row(pair.negative, i));
    }
    good += ok;
  }
  return {good == trials, std::to_string(good) + "/" + std::to_string(trials) +
                              " instances partition correctly with bit-equal unmasked rows"};
}

Outcome contrastive_analytics() {
  using TD = Tensor<double>;
  Rng rng(7);
  double worst_ln2 = 0.0;
  for (int i = 0; i < 20; ++i) {
    const TD b = testing::random_tensor({16}, rng), v = testing::random_tensor({16}, rng);
    worst_ln2 = std::max(worst_ln2, std::abs(contrastive_loss(b, v, v, 1.0).item() - std::log(2.0)));
  }
  const TD b({3}, {0.5, -1.0, 2.0});
  const double opposite =
      std::abs(contrastive_loss(b, scale(b, 3.0), scale(b, -0.25), 1.0).item() - std::log1p(std::exp(-2.0)));
  // s+ swept over a grid in [-1, 1] with s- fixed
  const TD anchor({2}, {1.0, 0.0});
  const TD neg({2}, {0.2, 0.7});
  bool decreasing = true;
  double prev = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double sp = -1.0 + 2.0 * k / 100.0;
    const TD pos({2}, {sp, std::sqrt(std::max(0.0, 1.0 - sp * sp))});
    const double l = contrastive_loss(anchor, pos, neg, 1.0).item();
    if (k > 0 && !(l < prev)) decreasing = false;
    prev = l;
  }
  const bool pass = worst_ln2 <= kLossAbs && opposite <= kLossAbs && decreasing;
  return {pass, "|l - ln2| " + fmt(worst_ln2) + ", |l - ln(1+e^-2)| " + fmt(opposite) + " (<= " + fmt(kLossAbs) +
                    "), strictly decreasing over 101 grid points: " + (decreasing ? "yes" : "no")};
}

Outcome rouge_oracle() {
  const auto hyp = rouge_tokens("left pleural effusion");
  const auto ref = rouge_tokens("small left pleural effusion");
  const double r1 = rouge_n(hyp, ref, 1).f1, r2 = rouge_n(hyp, ref, 2).f1, rl = rouge_l(hyp, ref).f1;
  const double i1 = rouge_n(ref, ref, 1).f1, i2 = rouge_n(ref, ref, 2).f1, il = rouge_l(ref, ref).f1;
  const bool pass = std::abs(r1 - 85.71) <= kRougeAbs && std::abs(r2 - 80.00) <= kRougeAbs &&
                    std::abs(rl - 85.71) <= kRougeAbs && i1 == 100.0 && i2 == 100.0 && il == 100.0;
  return {pass, "R-1 " + fmt(r1, 6) + ", R-2 " + fmt(r2, 6) + ", R-L " + fmt(rl, 6) + " (+/- " + fmt(kRougeAbs) +
                    "); identity " + fmt(i1) + "/" + fmt(i2) + "/" + fmt(il)};
}

// The desk-scale run shared by the overfit and separation criteria.
struct OverfitRun {
  std::unique_ptr<Trainer<float>> trainer;
  std::vector<PreparedExample> data;
  double seconds = 0.0;
  StepLog last;
};

OverfitRun overfit_training() {
  RunConfig cfg;  // d = 64, 2 + 2 layers, 300 steps, seed 0, contrastive on
  cfg.train.seed = 0;
  const auto records = generate_synthetic_corpus(32, 0);
  const Vocab vocab = build_corpus_vocab(records, cfg.vocab);
  OverfitRun run;
  run.data = prepare_examples(records, vocab, cfg);
  const auto t0 = Clock::now();
  run.trainer = std::make_unique<Trainer<float>>(cfg, vocab);
  run.last = run.trainer->train(run.data).back();
  run.seconds = seconds_since(t0);
  return run;
}

Outcome overfit() {
  const auto t0 = Clock::now();
  OverfitRun run = overfit_training();
  const double lge = run.trainer->mean_generation_loss(run.data);
  GenerationParams greedy = run.trainer->config().generation;
  greedy.beam_size = 1;
  const auto rep = evaluate_corpus(*run.trainer, run.data, greedy, run.trainer->config().eval.bucket_edges);
  const double secs = seconds_since(t0);
  const bool pass = lge < kOverfitLge && rep.r1 >= kOverfitR1 && secs < kOverfitSeconds;
  return {pass, "l_ge " + fmt(lge) + " (< " + fmt(kOverfitLge) + ", last batch " + fmt(run.last.l_ge) +
                    "), greedy R-1 " + fmt(rep.r1) + " (>= " + fmt(kOverfitR1) + "), " + fmt(secs, 4) + " s (< " +
                    fmt(kOverfitSeconds) + " s)"};
}

Outcome contrastive_separation() {
  OverfitRun run = overfit_training();
  const auto& trainer = *run.trainer;
  // held-out records come from a different generator seed
  const auto held = prepare_examples(generate_synthetic_corpus(16, 1000), trainer.vocab(), trainer.config());
  double pos = 0.0, neg = 0.0;
  for (const auto& ex : held) {
    const auto v = trainer.model().contrastive_views(ex.source.ids, ex.graph, true);
    pos += cosine_similarity(v.anchor, v.positive).item();
    neg += cosine_similarity(v.anchor, v.negative).item();
  }
  pos /= double(held.size());
  neg /= double(held.size());
  return {pos > neg, "mean sim(b, b^p) " + fmt(pos) + " > mean sim(b, b^n) " + fmt(neg) + " on " +
                         std::to_string(held.size()) + " held-out records"};
}

// Drives the `ablate` subcommand end to end and reads back its JSONL report.
Outcome ablation_direction() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "gcl_acceptance_ablation";
  fs::create_directories(dir);
  const std::string corpus = (dir / "corpus.jsonl").string(), config = (dir / "run.cfg").string(),
                    report = (dir / "ablation.txt").string();
  {
    std::ofstream out(corpus);
    write_corpus(out, generate_synthetic_corpus(kAblationRecords, kAblationCorpusSeed));
    RunConfig cfg;
    cfg.train.max_steps = kAblationSteps;
    std::ofstream(config) << cfg.serialize();
  }
  const auto t0 = Clock::now();
  const std::string seeds = std::to_string(kAblationSeeds);
  const char* argv[] = {"gcl", "ablate", "--corpus", corpus.c_str(), "--config", config.c_str(),
                        "--seeds", seeds.c_str(), "--report", report.c_str()};
  std::ostringstream table;
  const int code = cli::run_cli(static_cast<int>(std::size(argv)), argv, table, std::cerr);
  const double secs = seconds_since(t0);
  std::cerr << table.str();

  std::vector<nlohmann::json> rows;
  std::ifstream in(report + ".jsonl");
  for (std::string line; std::getline(in, line);) rows.push_back(nlohmann::json::parse(line));
  fs::remove_all(dir);
  const bool shaped = code == 0 && rows.size() == 4 && rows[0]["model"] == "Base" && rows[3]["model"] == "Base+graph+CL";
  const double base_r1 = shaped ? rows[0]["R-1"].get<double>() : std::nan("");
  const double full_r1 = shaped ? rows[3]["R-1"].get<double>() : std::nan("");
  const bool pass = shaped && full_r1 >= base_r1 && secs < kAblationSeconds;
  return {pass, "four-row report: " + std::string(shaped ? "yes" : "no") + ", seed-averaged R-1 Base+graph+CL " +
                    fmt(full_r1) + " >= Base " + fmt(base_r1) + ", " + fmt(secs, 4) + " s (< " +
                    fmt(kAblationSeconds) + " s)"};
}

Outcome determinism() {
  RunConfig cfg;
  cfg.train.max_steps = 10;
  cfg.encoder.dropout = 0.1;  // exercise the dropout stream too
  const auto records = generate_synthetic_corpus(32, 0);
  const Vocab vocab = build_corpus_vocab(records, cfg.vocab);
  const auto data = prepare_examples(records, vocab, cfg);
  auto losses = [](const std::vector<StepLog>& logs) {
    std::vector<double> v;
    for (const auto& l : logs) v.insert(v.end(), {l.l_ge, l.l_con, l.loss, l.grad_norm});
    return v;
  };
  auto params = [](const Trainer<float>& t) {
    std::vector<float> v;
    for (const auto& [name, p] : t.model().params().entries()) v.insert(v.end(), p.data().begin(), p.data().end());
    return v;
  };

  Trainer<float> a(cfg, vocab), b(cfg, vocab);
  const auto trace_a = losses(a.train(data));
  const bool same_trace = trace_a == losses(b.train(data)) && params(a) == params(b);

  const auto path = (std::filesystem::temp_directory_path() / "gcl_acceptance_resume.ckpt").string();
  Trainer<float> first(cfg, vocab);
  std::vector<StepLog> logs;
  for (int i = 0; i < 5; ++i) logs.push_back(first.train_step(data));
  save_checkpoint(first, path);
  auto resumed = load_checkpoint(path);
  const bool restored = serialize_checkpoint(*resumed) == serialize_checkpoint(first);
  for (const auto& l : resumed->train(data)) logs.push_back(l);
  std::filesystem::remove(path);
  const bool resume_exact = losses(logs) == trace_a && params(*resumed) == params(a);

  return {same_trace && restored && resume_exact,
          std::string("10-step traces bit-identical: ") + (same_trace ? "yes" : "no") +
              ", save/load round trip exact: " + (restored ? "yes" : "no") +
              ", resumed trajectory bit-exact: " + (resume_exact ? "yes" : "no")};
}

Outcome decoding() {
  std::size_t equal = 0, causal = 0, positions = 0;
  const std::size_t vocab = 24;
  NoGradGuard guard;
  for (std::uint64_t seed = 0; seed < kDecodingModels; ++seed) {
    SummarizationModel<float> model(testing::tiny_model_config(vocab), seed);
    Rng rng(derive_seed(seed, 77));
    std::vector<int> src(5 + rng.below(6));
    for (auto& t : src) t = Vocab::kSpecialCount + static_cast<int>(rng.below(vocab - Vocab::kSpecialCount));
    const RelationGraph g = testing::random_graph(src.size(), rng);
    const auto enc = model.encode(src, g, true);
    const Decoder<float>& dec = model.decoder();

    GenerationParams one;
    one.beam_size = 1;
    one.max_len = dec.max_len() - 1;
    equal += beam_search(dec, enc.s, one).tokens == greedy_decode(dec, enc.s, one.max_len);

    std::vector<int> prefix{Vocab::kBos};
    while (prefix.size() < dec.max_len()) prefix.push_back(static_cast<int>(rng.below(vocab)));
    const auto base = dec(enc.s, prefix);
    bool ok = true;
    for (std::size_t t = 0; t < prefix.size(); ++t) {
      auto changed = prefix;
      for (std::size_t u = t + 1; u < changed.size(); ++u) changed[u] = static_cast<int>(rng.below(vocab));
      const auto out = dec(enc.s, changed);
      for (std::size_t r = 0; r <= t; ++r)
        for (std::size_t j = 0; j < vocab; ++j) ok = ok && out.at(r, j) == base.at(r, j);
      ++positions;
    }
    causal += ok;
  }
  return {equal == kDecodingModels && causal == kDecodingModels,
          "beam 1 == greedy on " + std::to_string(equal) + "/" + std::to_string(kDecodingModels) +
              " models; causality holds for " + std::to_string(causal) + "/" + std::to_string(kDecodingModels) +
              " models (" + std::to_string(positions) + " perturbed positions)"};
}

struct Criterion {
  int number;
  const char* name;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> list{
      {1, "gradients", gradients},
      {2, "graph_oracle", graph_oracle},
      {3, "masking_partition", masking_partition},
      {4, "contrastive_analytics", contrastive_analytics},
      {5, "rouge_oracle", rouge_oracle},
      {6, "overfit", overfit},
      {7, "contrastive_separation", contrastive_separation},
      {8, "ablation_direction", ablation_direction},
      {9, "determinism", determinism},
      {10, "decoding", decoding},
  };
  return list;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) {
    try {
      wanted.push_back(std::stoi(argv[i]));
    } catch (const std::exception&) {
      std::cerr << "usage: acceptance [criterion number...]\n";
      return 2;
    }
  }
  int failures = 0;
  for (const auto& c : criteria()) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.number) == wanted.end()) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.number << "] " << c.name << ": " << o.detail << std::endl;
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
