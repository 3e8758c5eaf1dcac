#pragma once

// Vocabulary, token sequences and categorical distributions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lmapprox/errors.hpp"

namespace lmapprox {

using TokenId = std::uint32_t;
using TokenSequence = std::vector<TokenId>;
using TokenView = std::span<const TokenId>;

/// Absolute tolerance for the sum-to-one check on probability vectors.
inline constexpr double kNormalizationTolerance = 1e-9;

/// Bijective mapping between symbols and dense indices [0, size()).
class Vocabulary {
 public:
  explicit Vocabulary(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
    if (symbols_.size() < 2) {
      throw Error(ErrorKind::InvalidVocabulary, "vocabulary needs at least 2 symbols");
    }
    index_.reserve(symbols_.size());
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
      auto [it, inserted] = index_.emplace(symbols_[i], static_cast<TokenId>(i));
      if (!inserted) {
        throw Error(ErrorKind::InvalidVocabulary, "duplicate symbol '" + symbols_[i] + "'");
      }
    }
  }

  std::size_t size() const noexcept { return symbols_.size(); }
  const std::string& symbol(TokenId id) const { return symbols_.at(id); }
  const std::vector<std::string>& symbols() const noexcept { return symbols_; }

  TokenId index(const std::string& symbol) const {
    auto it = index_.find(symbol);
    if (it == index_.end()) {
      throw Error(ErrorKind::InvalidToken, "symbol '" + symbol + "' not in vocabulary");
    }
    return it->second;
  }

  bool contains(TokenId id) const noexcept { return id < symbols_.size(); }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.symbols_ == b.symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Throws InvalidToken unless every id indexes into `vocab`.
inline void validate_tokens(TokenView tokens, const Vocabulary& vocab) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!vocab.contains(tokens[i])) {
      throw Error(ErrorKind::InvalidToken, "token id " + std::to_string(tokens[i]) + " at offset " +
                                               std::to_string(i) + " outside vocabulary of size " +
                                               std::to_string(vocab.size()));
    }
  }
}

/// A single generated token, i.e. the index of the hot coordinate of g_{t,n}.
struct OneHotSample {
  TokenId index = 0;
  friend bool operator==(const OneHotSample&, const OneHotSample&) = default;
};

/// A teacher-forced evaluation point: predict gold[index] from the gold
/// history `prefix` (a view into the gold sequence, never generated tokens).
struct EvalPosition {
  std::size_t index = 0;
  TokenView prefix;
};

/// The last `window` gold tokens before `index` (all of them if fewer).
inline TokenView gold_prefix(TokenView gold, std::size_t index, std::size_t window) {
  const std::size_t begin = index > window ? index - window : 0;
  return gold.subspan(begin, index - begin);
}

/// Probability vector over a vocabulary. Immutable once constructed; the
/// constructor enforces componentwise [0,1] and sum-to-one within tolerance.
class CategoricalDistribution {
 public:
  explicit CategoricalDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) {
      throw Error(ErrorKind::InvalidDistribution, "empty probability vector");
    }
    double sum = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw Error(ErrorKind::InvalidDistribution, "component outside [0,1]: " + std::to_string(p));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kNormalizationTolerance) {
      throw Error(ErrorKind::InvalidDistribution, "components sum to " + std::to_string(sum));
    }
  }

  static CategoricalDistribution uniform(std::size_t size) {
    return CategoricalDistribution(std::vector<double>(size, 1.0 / static_cast<double>(size)));
  }

  static CategoricalDistribution one_hot(std::size_t size, TokenId index) {
    std::vector<double> probs(size, 0.0);
    probs.at(index) = 1.0;
    return CategoricalDistribution(std::move(probs));
  }

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t v) const noexcept { return probs_[v]; }
  double at(std::size_t v) const { return probs_.at(v); }
  std::span<const double> probs() const noexcept { return probs_; }

  friend bool operator==(const CategoricalDistribution&, const CategoricalDistribution&) = default;

 private:
  std::vector<double> probs_;
};

/// Normalized sample mean from per-symbol counts: probs[v] = counts[v] / total.
inline CategoricalDistribution dist_from_counts(std::span<const std::int64_t> counts, std::int64_t total) {
  if (total <= 0) {
    throw Error(ErrorKind::EmptySampleSet, "total must be positive, got " + std::to_string(total));
  }
  std::int64_t sum = 0;
  for (std::size_t v = 0; v < counts.size(); ++v) {
    if (counts[v] < 0) {
      throw Error(ErrorKind::InvalidCounts, "negative count at index " + std::to_string(v));
    }
    sum += counts[v];
  }
  if (sum != total) {
    throw Error(ErrorKind::InvalidCounts,
                "counts sum to " + std::to_string(sum) + " but total is " + std::to_string(total));
  }
  std::vector<double> probs(counts.size());
  const auto denom = static_cast<double>(total);
  std::transform(counts.begin(), counts.end(), probs.begin(),
                 [denom](std::int64_t c) { return static_cast<double>(c) / denom; });
  return CategoricalDistribution(std::move(probs));
}

/// max_v |a[v] - b[v]|
inline double sup_norm_distance(const CategoricalDistribution& a, const CategoricalDistribution& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::VocabMismatch, "distributions have sizes " + std::to_string(a.size()) + " and " +
                                              std::to_string(b.size()));
  }
  double best = 0.0;
  for (std::size_t v = 0; v < a.size(); ++v) {
    best = std::max(best, std::abs(a[v] - b[v]));
  }
  return best;
}

/// Mixture with the uniform distribution: (1 - eta) * d + eta / |V|.
/// Keeps every component at or above eta / |V| so log losses stay finite.
inline CategoricalDistribution smooth(const CategoricalDistribution& d, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw Error(ErrorKind::InvalidSmoothing, "eta must lie in [0,1], got " + std::to_string(eta));
  }
  if (eta == 0.0) return d;
  const double floor = eta / static_cast<double>(d.size());
  std::vector<double> probs(d.size());
  for (std::size_t v = 0; v < d.size(); ++v) {
    probs[v] = (1.0 - eta) * d[v] + floor;
  }
  return CategoricalDistribution(std::move(probs));
}

}  // namespace lmapprox
