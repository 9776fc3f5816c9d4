#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace gcl {

inline constexpr std::string_view kContinuation = "##";

/// Lowercases and splits on whitespace; punctuation becomes standalone tokens.
inline std::vector<std::string> normalize_text(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

/// Token string <-> dense id map with four fixed specials at ids 0..3.
class Vocab {
public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr std::size_t kSpecialCount = 4;

  static const std::vector<std::string>& special_tokens() {
    static const std::vector<std::string> specials{"[PAD]", "[UNK]", "[BOS]", "[EOS]"};
    return specials;
  }

  Vocab() : Vocab(special_tokens()) {}

  /// Tokens in id order; the first four must be the specials.
  explicit Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    const auto& specials = special_tokens();
    if (tokens_.size() < kSpecialCount) throw std::invalid_argument("vocabulary needs at least the four special tokens");
    for (std::size_t i = 0; i < kSpecialCount; ++i) {
      if (tokens_[i] != specials[i]) {
        throw std::invalid_argument("vocabulary id " + std::to_string(i) + " must be " + specials[i] + ", found '" +
                                    tokens_[i] + "'");
      }
    }
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i].empty()) throw std::invalid_argument("vocabulary id " + std::to_string(i) + " is empty");
      if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second) {
        throw std::invalid_argument("duplicate vocabulary token '" + tokens_[i] + "'");
      }
    }
  }

  std::size_t size() const { return tokens_.size(); }

  std::optional<int> find(const std::string& token) const {
    auto it = ids_.find(token);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(const std::string& token) const { return ids_.count(token) != 0; }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
  }

  static bool is_special(int id) { return id >= 0 && id < static_cast<int>(kSpecialCount); }

  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

  /// One token per line, line number = id.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open vocabulary file for writing: " + path);
    for (const auto& t : tokens_) out << t << '\n';
    if (!out) throw std::runtime_error("failed writing vocabulary file: " + path);
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      tokens.push_back(line);
    }
    return Vocab(std::move(tokens));
  }

private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Subword ids with the word -> subword alignment.
struct TokenizedText {
  std::vector<int> ids;
  std::vector<std::string> pieces;
  /// Per word, the half-open subword range [first, second).
  std::vector<std::pair<std::size_t, std::size_t>> spans;

  std::size_t size() const { return ids.size(); }
};

/// Frequency-driven piece harvesting: start from single characters and
/// repeatedly add the most frequent adjacent merge until `max_size` tokens
/// exist or no pair reaches `min_freq`. Ties go to the lexicographically
/// smallest pair, so the result depends only on the input multiset.
inline Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t max_size,
                         std::size_t min_freq = 2) {
  if (max_size <= Vocab::kSpecialCount) throw std::invalid_argument("build_vocab: max_size must exceed 4");
  std::map<std::string, std::size_t> word_freq;
  for (const auto& doc : corpus)
    for (const auto& w : doc)
      if (!w.empty()) ++word_freq[lowercase(w)];
  if (word_freq.empty()) throw std::invalid_argument("build_vocab: empty corpus");

  std::vector<std::string> tokens = Vocab::special_tokens();
  std::unordered_map<std::string, bool> present;
  for (const auto& t : tokens) present[t] = true;

  struct Entry {
    std::vector<std::string> symbols;
    std::size_t freq;
  };
  std::vector<Entry> words;
  std::map<std::string, bool> chars;
  for (const auto& [w, f] : word_freq) {
    Entry e{{}, f};
    for (std::size_t i = 0; i < w.size(); ++i) {
      std::string sym = i == 0 ? std::string(1, w[i]) : std::string(kContinuation) + w[i];
      chars[sym] = true;
      e.symbols.push_back(std::move(sym));
    }
    words.push_back(std::move(e));
  }
  for (const auto& [c, unused] : chars) {
    if (!present[c]) {
      tokens.push_back(c);
      present[c] = true;
    }
  }
  if (tokens.size() > max_size) {
    throw std::invalid_argument("build_vocab: " + std::to_string(tokens.size()) +
                                " specials and characters exceed max_size " + std::to_string(max_size));
  }

  auto merged = [](const std::string& left, const std::string& right) {
    return left + right.substr(kContinuation.size());
  };

  while (tokens.size() < max_size) {
    std::map<std::pair<std::string, std::string>, std::size_t> pairs;
    for (const auto& e : words)
      for (std::size_t i = 0; i + 1 < e.symbols.size(); ++i) pairs[{e.symbols[i], e.symbols[i + 1]}] += e.freq;
    if (pairs.empty()) break;
    // map order gives the lexicographically smallest pair among equal counts
    auto best = pairs.begin();
    for (auto it = pairs.begin(); it != pairs.end(); ++it)
      if (it->second > best->second) best = it;
    if (best->second < min_freq) break;
    const auto [left, right] = best->first;
    const std::string joined = merged(left, right);
    if (!present[joined]) {
      tokens.push_back(joined);
      present[joined] = true;
    }
    for (auto& e : words) {
      std::vector<std::string> next;
      next.reserve(e.symbols.size());
      for (std::size_t i = 0; i < e.symbols.size(); ++i) {
        if (i + 1 < e.symbols.size() && e.symbols[i] == left && e.symbols[i + 1] == right) {
          next.push_back(joined);
          ++i;
        } else {
          next.push_back(e.symbols[i]);
        }
      }
      e.symbols = std::move(next);
    }
  }
  return Vocab(std::move(tokens));
}

/// Greedy longest-match-first segmentation of each word. A word with no
/// complete segmentation becomes a single [UNK].
inline TokenizedText encode_words(std::span<const std::string> words, const Vocab& vocab) {
  if (words.empty()) throw std::invalid_argument("encode_words: no words");
  TokenizedText out;
  for (const auto& raw : words) {
    const std::string word = lowercase(raw);
    const std::size_t first = out.ids.size();
    std::vector<std::pair<int, std::string>> pieces;
    std::size_t start = 0;
    bool ok = !word.empty();
    while (ok && start < word.size()) {
      std::optional<std::pair<int, std::string>> found;
      for (std::size_t end = word.size(); end > start; --end) {
        std::string cand = word.substr(start, end - start);
        if (start > 0) cand = std::string(kContinuation) + cand;
        if (auto id = vocab.find(cand)) {
          found.emplace(*id, std::move(cand));
          start = end;
          break;
        }
      }
      if (!found) ok = false;
      else pieces.push_back(std::move(*found));
    }
    if (!ok) {
      pieces.assign(1, {Vocab::kUnk, vocab.token(Vocab::kUnk)});
    }
    for (auto& [id, piece] : pieces) {
      out.ids.push_back(id);
      out.pieces.push_back(std::move(piece));
    }
    out.spans.emplace_back(first, out.ids.size());
  }
  return out;
}

/// Word strings of an id sequence: continuation pieces are glued onto the
/// preceding word and special tokens are dropped.
inline std::vector<std::string> decode_words(std::span<const int> ids, const Vocab& vocab) {
  std::vector<std::string> words;
  for (int id : ids) {
    const std::string& tok = vocab.token(id);
    if (Vocab::is_special(id)) continue;
    if (tok.size() > kContinuation.size() && tok.compare(0, kContinuation.size(), kContinuation) == 0) {
      const std::string tail = tok.substr(kContinuation.size());
      if (words.empty()) words.push_back(tail);
      else words.back() += tail;
    } else {
      words.push_back(tok);
    }
  }
  return words;
}

inline std::string decode_ids(std::span<const int> ids, const Vocab& vocab) {
  std::string out;
  for (const auto& w : decode_words(ids, vocab)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace gcl
