#pragma once

// text8-style character corpora: 26 lowercase letters plus space, split
// 90/5/5 into train/validation/test.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "lmapprox/core.hpp"
#include "lmapprox/seeding.hpp"

namespace lmapprox {

/// 'a'..'z' -> 0..25, ' ' -> 26. Frozen: protocol handshakes and regression
/// values depend on it.
inline Vocabulary text8_vocabulary() {
  std::vector<std::string> symbols;
  for (char c = 'a'; c <= 'z'; ++c) symbols.emplace_back(1, c);
  symbols.emplace_back(" ");
  return Vocabulary(std::move(symbols));
}

inline constexpr TokenId kSpaceId = 26;

enum class Split { Train, Validation, Test };

inline Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "validation" || name == "valid") return Split::Validation;
  if (name == "test") return Split::Test;
  throw Error(ErrorKind::InvalidArgument, "unknown split '" + std::string(name) + "'");
}

/// Maps one byte to its text8 id, or -1 if it is outside the charset.
constexpr int text8_id(unsigned char byte) noexcept {
  if (byte >= 'a' && byte <= 'z') return byte - 'a';
  if (byte == ' ') return static_cast<int>(kSpaceId);
  return -1;
}

/// Converts text to ids; throws a CorpusFormat error with the byte offset of the
/// first disallowed byte.
inline TokenSequence tokenize_text8(std::string_view text) {
  TokenSequence ids;
  ids.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const int id = text8_id(static_cast<unsigned char>(text[i]));
    if (id < 0) {
      char byte[8];
      std::snprintf(byte, sizeof byte, "0x%02x", static_cast<unsigned char>(text[i]));
      throw Error(ErrorKind::CorpusFormat,
                  std::string("disallowed byte ") + byte + " at offset " + std::to_string(i));
    }
    ids.push_back(static_cast<TokenId>(id));
  }
  return ids;
}

inline std::string detokenize_text8(TokenView ids) {
  std::string out(ids.size(), ' ');
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out[i] = ids[i] == kSpaceId ? ' ' : static_cast<char>('a' + ids[i]);
  }
  return out;
}

class CharCorpus {
 public:
  explicit CharCorpus(TokenSequence data) : vocab_(text8_vocabulary()), data_(std::move(data)) {
    if (data_.empty()) throw Error(ErrorKind::EmptyCorpus, "corpus is empty");
    validate_tokens(data_, vocab_);
    train_end_ = data_.size() * 90 / 100;
    validation_end_ = train_end_ + data_.size() * 5 / 100;
  }

  const Vocabulary& vocab() const noexcept { return vocab_; }
  TokenView data() const noexcept { return data_; }

  TokenView split(Split which) const noexcept {
    const TokenView all(data_);
    switch (which) {
      case Split::Train: return all.subspan(0, train_end_);
      case Split::Validation: return all.subspan(train_end_, validation_end_ - train_end_);
      case Split::Test: return all.subspan(validation_end_);
    }
    return {};
  }

 private:
  Vocabulary vocab_;
  TokenSequence data_;
  std::size_t train_end_ = 0;
  std::size_t validation_end_ = 0;
};

inline CharCorpus load_char_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open corpus file '" + path + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.empty()) throw Error(ErrorKind::EmptyCorpus, "corpus file '" + path + "' is empty");
  return CharCorpus(tokenize_text8(text));
}

/// `count` distinct evaluation positions drawn uniformly without replacement
/// from the indices 1 .. split.size() - 1 of `split` (index 0 has no
/// history). Uses a partial Fisher-Yates shuffle driven by SplitMix64(seed),
/// so the output is a shuffled order, identical for equal seeds. Prefixes are
/// truncated to the last `window` tokens.
inline std::vector<EvalPosition> sample_positions(TokenView split, std::size_t count, std::uint64_t seed,
                                                  std::size_t window = SIZE_MAX) {
  const std::size_t available = split.empty() ? 0 : split.size() - 1;
  if (count > available) {
    throw Error(ErrorKind::SubsetTooLarge, "requested " + std::to_string(count) + " positions but only " +
                                               std::to_string(available) + " are available");
  }
  std::vector<std::size_t> pool(available);
  for (std::size_t i = 0; i < available; ++i) pool[i] = i + 1;
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(available - i));
    std::swap(pool[i], pool[j]);
  }
  std::vector<EvalPosition> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back({pool[i], gold_prefix(split, pool[i], window)});
  }
  return out;
}

inline std::vector<EvalPosition> sample_positions(const CharCorpus& corpus, Split which, std::size_t count,
                                                  std::uint64_t seed, std::size_t window = SIZE_MAX) {
  return sample_positions(corpus.split(which), count, seed, window);
}

}  // namespace lmapprox
