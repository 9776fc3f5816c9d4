#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcl/training.hpp"

// Checkpoint file: a plain-text manifest terminated by an "end" line, then a
// blob of 32-bit little-endian floats. Manifest offsets are byte offsets into
// the blob.
//
//   GCL-CHECKPOINT
//   version 1
//   step <n>
//   blob_bytes <n>
//   config <k>          followed by k "key = value" lines
//   vocab <k>           followed by k token lines
//   params <k>          followed by k "param <name> <rank> <dims..> <offset>"
//   adam <k>            followed by k "moment <name> <t> <m_offset> <v_offset>"
//   end
namespace gcl {

class CheckpointError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointMagic = "GCL-CHECKPOINT";

namespace detail {

static_assert(sizeof(float) == 4, "checkpoint blob assumes 32-bit floats");

inline void put_f32(std::string& blob, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  for (int b = 0; b < 4; ++b) blob.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

inline float get_f32(const std::string& blob, std::size_t offset) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[offset + b])) << (8 * b);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline std::string read_line(std::istream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line)) throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
  return line;
}

inline std::size_t expect_count(const std::string& line, const std::string& key) {
  std::istringstream ss(line);
  std::string k;
  std::size_t n = 0;
  if (!(ss >> k >> n) || k != key) throw CheckpointError("checkpoint manifest: expected '" + key + " <n>', got '" + line + "'");
  return n;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Trainer<float>& trainer) {
  std::string blob;
  std::ostringstream params;
  for (const auto& [name, t] : trainer.model().params().entries()) {
    params << "param " << name << ' ' << t.rank();
    for (std::size_t d : t.shape()) params << ' ' << d;
    params << ' ' << blob.size() << '\n';
    for (float v : t.data()) detail::put_f32(blob, v);
  }
  std::ostringstream moments;
  for (const auto& [name, st] : trainer.optimizer().states()) {
    moments << "moment " << name << ' ' << st.t << ' ' << blob.size();
    for (float v : st.m) detail::put_f32(blob, v);
    moments << ' ' << blob.size() << '\n';
    for (float v : st.v) detail::put_f32(blob, v);
  }
  const std::string config = trainer.config().serialize();
  std::ostringstream os;
  os << kCheckpointMagic << '\n'
     << "version " << kCheckpointVersion << '\n'
     << "step " << trainer.step() << '\n'
     << "blob_bytes " << blob.size() << '\n';
  std::size_t config_lines = 0;
  for (char c : config) config_lines += c == '\n';
  os << "config " << config_lines << '\n' << config;
  os << "vocab " << trainer.vocab().size() << '\n';
  for (const auto& tok : trainer.vocab().tokens()) os << tok << '\n';
  os << "params " << trainer.model().params().size() << '\n' << params.str();
  os << "adam " << trainer.optimizer().states().size() << '\n' << moments.str();
  os << "end\n";
  os << blob;
  return os.str();
}

inline void save_checkpoint(const Trainer<float>& trainer, const std::string& path) {
  const std::string bytes = serialize_checkpoint(trainer);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint: " + path);
}

inline std::unique_ptr<Trainer<float>> deserialize_checkpoint(const std::string& bytes) {
  std::istringstream in(bytes);
  if (detail::read_line(in, "magic") != kCheckpointMagic) throw CheckpointError("not a checkpoint file (bad magic)");
  const std::string version_line = detail::read_line(in, "version");
  if (version_line != "version " + std::to_string(kCheckpointVersion)) {
    throw CheckpointError("unsupported checkpoint version: expected 'version " + std::to_string(kCheckpointVersion) +
                          "', found '" + version_line + "'");
  }
  const std::size_t step = detail::expect_count(detail::read_line(in, "step"), "step");
  const std::size_t blob_bytes = detail::expect_count(detail::read_line(in, "blob size"), "blob_bytes");

  std::string config_text;
  const std::size_t config_lines = detail::expect_count(detail::read_line(in, "config"), "config");
  for (std::size_t i = 0; i < config_lines; ++i) config_text += detail::read_line(in, "config") + '\n';
  std::istringstream config_stream(config_text);
  RunConfig cfg = RunConfig::parse(config_stream);

  std::vector<std::string> tokens;
  const std::size_t vocab_size = detail::expect_count(detail::read_line(in, "vocab"), "vocab");
  for (std::size_t i = 0; i < vocab_size; ++i) tokens.push_back(detail::read_line(in, "vocab"));

  struct ParamLine {
    std::string name;
    Shape shape;
    std::size_t offset;
  };
  std::vector<ParamLine> params;
  const std::size_t param_count = detail::expect_count(detail::read_line(in, "params"), "params");
  for (std::size_t i = 0; i < param_count; ++i) {
    std::istringstream ss(detail::read_line(in, "params"));
    std::string tag;
    ParamLine p;
    std::size_t rank = 0;
    if (!(ss >> tag >> p.name >> rank) || tag != "param") throw CheckpointError("checkpoint manifest: malformed param line");
    p.shape.resize(rank);
    for (auto& d : p.shape)
      if (!(ss >> d)) throw CheckpointError("checkpoint manifest: malformed shape for " + p.name);
    if (!(ss >> p.offset)) throw CheckpointError("checkpoint manifest: missing offset for " + p.name);
    params.push_back(std::move(p));
  }
  struct MomentLine {
    std::string name;
    std::uint64_t t;
    std::size_t m_offset, v_offset;
  };
  std::vector<MomentLine> moments;
  const std::size_t moment_count = detail::expect_count(detail::read_line(in, "adam"), "adam");
  for (std::size_t i = 0; i < moment_count; ++i) {
    std::istringstream ss(detail::read_line(in, "adam"));
    std::string tag;
    MomentLine m;
    if (!(ss >> tag >> m.name >> m.t >> m.m_offset >> m.v_offset) || tag != "moment")
      throw CheckpointError("checkpoint manifest: malformed moment line");
    moments.push_back(std::move(m));
  }
  if (detail::read_line(in, "end marker") != "end") throw CheckpointError("checkpoint manifest: missing end marker");

  const std::string blob(std::istreambuf_iterator<char>(in), {});
  if (blob.size() != blob_bytes) {
    throw CheckpointError("checkpoint blob holds " + std::to_string(blob.size()) + " bytes, manifest declares " +
                          std::to_string(blob_bytes) + " (truncated or corrupt)");
  }

  Vocab vocab(std::move(tokens));
  auto trainer = std::make_unique<Trainer<float>>(cfg, vocab);
  auto& store = trainer->model().params();
  if (params.size() != store.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(params.size()) + " parameters, model expects " +
                          std::to_string(store.size()));
  }
  std::set<std::string> seen;
  auto read_block = [&](std::size_t offset, std::size_t count, const std::string& name) {
    if (offset + 4 * count > blob.size()) throw CheckpointError("checkpoint blob too short for " + name);
    std::vector<float> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = detail::get_f32(blob, offset + 4 * i);
    return out;
  };
  for (const auto& p : params) {
    if (!seen.insert(p.name).second) throw CheckpointError("checkpoint lists parameter '" + p.name + "' twice");
    if (!store.contains(p.name)) throw CheckpointError("checkpoint parameter '" + p.name + "' unknown to the model");
    Tensor<float> t = store.get(p.name);
    if (t.shape() != p.shape) {
      throw CheckpointError("checkpoint parameter '" + p.name + "' has shape " + shape_str(p.shape) + ", model expects " +
                            shape_str(t.shape()));
    }
    const auto values = read_block(p.offset, t.numel(), p.name);
    std::copy(values.begin(), values.end(), t.data().begin());
  }
  for (const auto& m : moments) {
    if (!store.contains(m.name)) throw CheckpointError("optimizer state for unknown parameter '" + m.name + "'");
    const std::size_t n = store.get(m.name).numel();
    AdamState<float> st;
    st.t = m.t;
    st.m = read_block(m.m_offset, n, m.name);
    st.v = read_block(m.v_offset, n, m.name);
    trainer->optimizer().states()[m.name] = std::move(st);
  }
  trainer->set_step(step);
  return trainer;
}

inline std::unique_ptr<Trainer<float>> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  const std::string bytes(std::istreambuf_iterator<char>(in), {});
  return deserialize_checkpoint(bytes);
}

}  // namespace gcl
