#pragma once

// Command-line front end. Kept in a header so tests can drive run_cli()
// in-process.

#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gcl/gcl.hpp"

namespace gcl::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2 };

namespace detail {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  return out;
}

inline void write_file(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path);
}

inline RunConfig load_config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : RunConfig::load(path);
}

inline const CorpusRecord& find_record(const std::vector<CorpusRecord>& records, const std::string& id) {
  for (const auto& r : records)
    if (r.id == id) return r;
  throw ValidationError("no record with id '" + id + "'");
}

}  // namespace detail

struct Options {
  std::string corpus, out, vocab, config, ckpt, report, id, dot, json, lexicon, input, log, valid, per_example;
  std::size_t max_size = VocabConfig{}.max_size;
  std::size_t min_freq = VocabConfig{}.min_freq;
  std::size_t beam = 0;  // 0 keeps the checkpoint's setting
  std::size_t seeds = 3;
  std::size_t count = 32;
  std::uint64_t seed = 0;
};

inline int cmd_build_vocab(const Options& o, std::ostream& out) {
  const auto records = load_corpus_strict(o.corpus);
  const Vocab vocab = build_corpus_vocab(records, VocabConfig{o.max_size, o.min_freq});
  vocab.save(o.out);
  out << "vocabulary of " << vocab.size() << " tokens from " << records.size() << " records -> " << o.out << '\n';
  return kOk;
}

inline int cmd_build_graph(const Options& o, std::ostream& out) {
  const auto records = load_corpus_strict(o.corpus);
  const RunConfig cfg = detail::load_config_or_default(o.config);
  const Vocab vocab = o.vocab.empty() ? build_corpus_vocab(records, cfg.vocab) : Vocab::load(o.vocab);
  const CorpusRecord& rec = detail::find_record(records, o.id);
  const TokenizedText text = encode_words(rec.words, vocab);
  RelationGraph graph;
  try {
    graph = build_relation_graph(text, rec.entities, rec.dependencies, cfg.graph);
  } catch (const std::out_of_range& e) {
    throw ValidationError("record '" + rec.id + "': " + e.what());
  }
  if (!o.dot.empty()) detail::write_file(o.dot, export_dot(graph, text));
  if (!o.json.empty()) detail::write_file(o.json, graph_to_json(graph).dump() + "\n");
  out << "record " << rec.id << ": " << graph.n << " subwords, " << graph.edges.size() << " edges, " << graph.key.size()
      << " key nodes\n";
  return kOk;
}

inline int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = RunConfig::load(o.config);
  const Vocab vocab = Vocab::load(o.vocab);
  const auto data = prepare_examples(load_corpus_strict(o.corpus), vocab, cfg);
  std::vector<PreparedExample> valid;
  if (!o.valid.empty()) valid = prepare_examples(load_corpus_strict(o.valid), vocab, cfg);

  Trainer<float> trainer(cfg, vocab);
  const std::string log_path = o.log.empty() ? o.out + ".metrics.jsonl" : o.log;
  auto log = detail::open_out(log_path);
  try {
    trainer.train(data, [&](const StepLog& s) {
      log << s.to_json().dump() << '\n';
      const std::size_t every = cfg.train.validation_interval;
      if (every && !valid.empty() && s.step % every == 0) {
        nlohmann::ordered_json v;
        v["step"] = s.step;
        v["val_l_ge"] = trainer.mean_generation_loss(valid);
        log << v.dump() << '\n';
      }
    });
  } catch (const NonFiniteLoss& e) {
    save_checkpoint(trainer, o.out);
    err << "error: " << e.what() << "; last good state (step " << trainer.step() << ") saved to " << o.out << '\n';
    return kRuntime;
  }
  save_checkpoint(trainer, o.out);
  out << "trained " << trainer.step() << " steps on " << data.size() << " records -> " << o.out << '\n';
  return kOk;
}

inline GenerationParams generation_params(const Trainer<float>& trainer, std::size_t beam) {
  GenerationParams gen = trainer.config().generation;
  if (beam) gen.beam_size = beam;
  return gen;
}

inline int cmd_generate(const Options& o, std::ostream& out) {
  const auto trainer = load_checkpoint(o.ckpt);
  const auto data = prepare_examples(load_corpus_strict(o.corpus), trainer->vocab(), trainer->config());
  const GenerationParams gen = generation_params(*trainer, o.beam);
  auto file = detail::open_out(o.out);
  for (const auto& ex : data) {
    nlohmann::ordered_json j;
    j["id"] = ex.id;
    j["impression"] = decode_ids(trainer->generate(ex, gen), trainer->vocab());
    file << j.dump() << '\n';
  }
  out << "generated " << data.size() << " impressions -> " << o.out << '\n';
  return kOk;
}

inline int cmd_evaluate(const Options& o, std::ostream& out) {
  const auto trainer = load_checkpoint(o.ckpt);
  const auto data = prepare_examples(load_corpus_strict(o.corpus), trainer->vocab(), trainer->config());
  const auto rep =
      evaluate_corpus(*trainer, data, generation_params(*trainer, o.beam), trainer->config().eval.bucket_edges);
  const std::string table = report_table(rep);
  detail::write_file(o.report, table);
  detail::write_file(o.report + ".jsonl", report_jsonl(rep));
  if (!o.per_example.empty()) detail::write_file(o.per_example, per_example_jsonl(rep));
  out << table;
  return kOk;
}

inline int cmd_ablate(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = detail::load_config_or_default(o.config);
  const auto records = load_corpus_strict(o.corpus);
  if (o.seeds < 1) throw ValidationError("--seeds must be >= 1");
  const auto table = run_ablation(records, cfg, o.seeds, [&](const std::string& line) { err << line << '\n'; });
  const std::string text = ablation_table_text(table);
  detail::write_file(o.report, text);
  detail::write_file(o.report + ".jsonl", ablation_jsonl(table));
  out << text;
  for (const auto& row : table.rows)
    if (row.failed()) return kRuntime;
  return kOk;
}

inline int cmd_synth(const Options& o, std::ostream& out) {
  if (o.count < 1) throw ValidationError("--count must be >= 1");
  const auto records = generate_synthetic_corpus(o.count, o.seed);
  auto file = detail::open_out(o.out);
  write_corpus(file, records);
  out << "wrote " << records.size() << " records (hash " << std::hex << corpus_hash(records) << std::dec << ") -> "
      << o.out << '\n';
  return kOk;
}

inline int cmd_annotate(const Options& o, std::ostream& out) {
  std::ifstream lex_in(o.lexicon);
  if (!lex_in) throw std::runtime_error("cannot open lexicon: " + o.lexicon);
  const Lexicon lex = load_lexicon(lex_in);
  auto records = load_corpus_strict(o.input);
  std::size_t entities = 0;
  for (auto& r : records) {
    auto ann = heuristic_annotate(r.words, lex);
    r.entities = std::move(ann.entities);
    r.dependencies = std::move(ann.dependencies);
    r.annotator = "heuristic";
    entities += r.entities.size();
  }
  auto file = detail::open_out(o.out);
  write_corpus(file, records);
  out << "annotated " << records.size() << " records with " << entities << " entities -> " << o.out << '\n';
  return kOk;
}

/// Parses argv and runs one subcommand. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Graph-enhanced contrastive summarization toolkit", "gcl"};
  app.require_subcommand(1);
  Options o;

  auto* vocab_cmd = app.add_subcommand("build-vocab", "Build a subword vocabulary from a corpus");
  vocab_cmd->add_option("--corpus", o.corpus)->required()->check(CLI::ExistingFile);
  vocab_cmd->add_option("--out", o.out)->required();
  vocab_cmd->add_option("--max-size", o.max_size)->check(CLI::Range(std::size_t{5}, std::size_t{1} << 24));
  vocab_cmd->add_option("--min-freq", o.min_freq)->check(CLI::PositiveNumber);

  auto* graph_cmd = app.add_subcommand("build-graph", "Build and export the relation graph of one record");
  graph_cmd->add_option("--corpus", o.corpus)->required()->check(CLI::ExistingFile);
  graph_cmd->add_option("--id", o.id)->required();
  graph_cmd->add_option("--dot", o.dot);
  graph_cmd->add_option("--json", o.json);
  graph_cmd->add_option("--vocab", o.vocab)->check(CLI::ExistingFile);
  graph_cmd->add_option("--config", o.config)->check(CLI::ExistingFile);

  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  train_cmd->add_option("--corpus", o.corpus)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--vocab", o.vocab)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--config", o.config)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", o.out)->required();
  train_cmd->add_option("--log", o.log, "metrics JSONL (default <out>.metrics.jsonl)");
  train_cmd->add_option("--valid", o.valid, "held-out corpus scored every validation_interval steps")
      ->check(CLI::ExistingFile);

  auto* gen_cmd = app.add_subcommand("generate", "Generate impressions with a checkpoint");
  gen_cmd->add_option("--ckpt", o.ckpt)->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--corpus", o.corpus)->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--beam", o.beam)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--out", o.out)->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "Score a checkpoint with ROUGE");
  eval_cmd->add_option("--ckpt", o.ckpt)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--corpus", o.corpus)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--report", o.report, "text table; JSONL goes to <report>.jsonl")->required();
  eval_cmd->add_option("--beam", o.beam)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--dump-per-example", o.per_example);

  auto* ablate_cmd = app.add_subcommand("ablate", "Train and score the four ablation variants");
  ablate_cmd->add_option("--corpus", o.corpus)->required()->check(CLI::ExistingFile);
  ablate_cmd->add_option("--config", o.config)->check(CLI::ExistingFile);
  ablate_cmd->add_option("--seeds", o.seeds)->check(CLI::PositiveNumber);
  ablate_cmd->add_option("--report", o.report, "text table; JSONL goes to <report>.jsonl")->required();

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic corpus with gold annotations");
  synth_cmd->add_option("--out", o.out)->required();
  synth_cmd->add_option("--count", o.count)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", o.seed);

  auto* ann_cmd = app.add_subcommand("annotate", "Replace annotations with lexicon-based heuristics");
  ann_cmd->add_option("--in", o.input)->required()->check(CLI::ExistingFile);
  ann_cmd->add_option("--lexicon", o.lexicon)->required()->check(CLI::ExistingFile);
  ann_cmd->add_option("--out", o.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }

  try {
    if (*vocab_cmd) return cmd_build_vocab(o, out);
    if (*graph_cmd) return cmd_build_graph(o, out);
    if (*train_cmd) return cmd_train(o, out, err);
    if (*gen_cmd) return cmd_generate(o, out);
    if (*eval_cmd) return cmd_evaluate(o, out);
    if (*ablate_cmd) return cmd_ablate(o, out, err);
    if (*synth_cmd) return cmd_synth(o, out);
    if (*ann_cmd) return cmd_annotate(o, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kRuntime;
}

}  // namespace gcl::cli
