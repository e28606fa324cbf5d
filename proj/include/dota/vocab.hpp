#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dota/common.hpp"
#include "dota/text.hpp"

namespace dota {

using TokenId = std::int32_t;

/// Upper bound on a framed model-input sequence (begin, content, end).
inline constexpr std::size_t kMaxTextTokens = 146;

/// WordPiece vocabulary: line number is the id, "##" marks continuations.
class Vocabulary {
 public:
  static constexpr std::string_view kUnk = "[UNK]";
  static constexpr std::string_view kBos = "[CLS]";
  static constexpr std::string_view kEos = "[SEP]";
  static constexpr std::string_view kPad = "[PAD]";
  static constexpr std::size_t kMaxCharsPerWord = 100;

  Vocabulary() = default;

  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    ids_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i].empty()) throw FormatError("vocabulary: empty token at id " + std::to_string(i));
      if (!ids_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
        throw FormatError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
    unk_ = require(kUnk);
    bos_ = require(kBos);
    eos_ = require(kEos);
    pad_ = require(kPad);
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocabulary " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      tokens.push_back(line);
    }
    // tolerate one trailing blank line
    if (!tokens.empty() && tokens.back().empty()) tokens.pop_back();
    return Vocabulary(std::move(tokens));
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
      throw Error("token id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::optional<TokenId> find(std::string_view tok) const {
    const auto it = ids_.find(std::string(tok));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  TokenId unk() const { return unk_; }
  TokenId bos() const { return bos_; }
  TokenId eos() const { return eos_; }
  TokenId pad() const { return pad_; }
  bool is_special(TokenId id) const { return id == unk_ || id == bos_ || id == eos_ || id == pad_; }

 private:
  TokenId require(std::string_view tok) const {
    const auto id = find(tok);
    if (!id) throw FormatError("vocabulary: missing special token " + std::string(tok));
    return *id;
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  TokenId unk_ = 0, bos_ = 0, eos_ = 0, pad_ = 0;
};

/// Greedy longest-match-first segmentation of a single word.
inline void wordpiece_word(std::string_view word, const Vocabulary& vocab, std::vector<TokenId>& out) {
  const std::u32string chars = utf8::decode(word);
  if (chars.size() > Vocabulary::kMaxCharsPerWord) {
    out.push_back(vocab.unk());
    return;
  }
  std::vector<TokenId> pieces;
  std::size_t start = 0;
  while (start < chars.size()) {
    std::size_t end = chars.size();
    std::optional<TokenId> hit;
    while (end > start) {
      std::string piece = start > 0 ? "##" : "";
      piece += utf8::encode(std::u32string_view(chars).substr(start, end - start));
      if ((hit = vocab.find(piece))) break;
      --end;
    }
    if (!hit) {
      out.push_back(vocab.unk());
      return;
    }
    pieces.push_back(*hit);
    start = end;
  }
  out.insert(out.end(), pieces.begin(), pieces.end());
}

/// WordPiece ids of normalized text without any length cap.
inline std::vector<TokenId> tokenize_all(std::string_view normalized, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  for (const auto& w : split_words(normalized)) wordpiece_word(w, vocab, ids);
  return ids;
}

/// WordPiece ids truncated to `max_tokens` (146 by default).
inline std::vector<TokenId> tokenize(std::string_view normalized, const Vocabulary& vocab,
                                     std::size_t max_tokens = kMaxTextTokens) {
  auto ids = tokenize_all(normalized, vocab);
  if (ids.size() > max_tokens) ids.resize(max_tokens);
  return ids;
}

inline std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : ids) {
    const std::string& tok = vocab.token(id);
    if (vocab.is_special(id)) continue;
    if (tok.size() > 2 && tok.starts_with("##")) {
      out.append(tok, 2);
    } else {
      if (!out.empty()) out.push_back(' ');
      out += tok;
    }
  }
  return out;
}

/// Teacher-forcing pair for one transcript: model inputs are
/// [bos, c1..cn] and targets [c1..cn, eos]. Content is cut so the framed
/// sequence [bos, c1..cn, eos] fits in `max_framed` tokens.
struct FramedTokens {
  std::vector<TokenId> inputs;
  std::vector<TokenId> targets;
};

inline FramedTokens frame_tokens(std::span<const TokenId> content, const Vocabulary& vocab,
                                 std::size_t max_framed = kMaxTextTokens) {
  if (max_framed < 2) throw Error("frame_tokens: budget must allow begin and end tokens");
  const std::size_t n = std::min(content.size(), max_framed - 2);
  FramedTokens f;
  f.inputs.reserve(n + 1);
  f.targets.reserve(n + 1);
  f.inputs.push_back(vocab.bos());
  f.inputs.insert(f.inputs.end(), content.begin(), content.begin() + static_cast<std::ptrdiff_t>(n));
  f.targets.assign(content.begin(), content.begin() + static_cast<std::ptrdiff_t>(n));
  f.targets.push_back(vocab.eos());
  return f;
}

}  // namespace dota
