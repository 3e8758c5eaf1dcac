#pragma once

// The stochastic next-token generator contract and the builtin analytic
// generators used as oracles.

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "lmapprox/core.hpp"
#include "lmapprox/seeding.hpp"

namespace lmapprox {

/// A stochastic sampler of the next token given a gold prefix.
///
/// sample_next must return exactly `count` samples and must be a pure
/// function of (prefix, count, seed). Implementations draw sample i from
/// draw i of the SplitMix64 stream for `seed` (see seeding.hpp), which lets
/// callers shard a request with offset_seed and get identical tokens back.
class Generator {
 public:
  virtual ~Generator() = default;

  virtual const Vocabulary& vocabulary() const = 0;

  virtual std::vector<OneHotSample> sample_next(TokenView prefix, std::size_t count,
                                                std::uint64_t seed) const = 0;

  virtual bool has_true_next_dist() const { return false; }

  virtual CategoricalDistribution true_next_dist(TokenView /*prefix*/) const {
    throw Error(ErrorKind::UnsupportedCapability, "generator does not expose its next-token distribution");
  }

  /// False when concurrent sample_next calls would only serialize (e.g. one
  /// external process behind a lock); the evaluator then stays single-threaded.
  virtual bool concurrent_sampling() const { return true; }
};

using GeneratorHandle = std::shared_ptr<const Generator>;

/// Inverse-CDF sampler over a fixed distribution. The cumulative sums are
/// accumulated left to right in double precision; a uniform draw u in [0,1)
/// selects the first index whose cumulative sum is strictly greater than u.
/// If rounding leaves u beyond the last cumulative value, the last index with
/// positive mass is returned.
class InverseCdfSampler {
 public:
  explicit InverseCdfSampler(const CategoricalDistribution& dist) : cdf_(dist.size()) {
    double running = 0.0;
    for (std::size_t v = 0; v < dist.size(); ++v) {
      running += dist[v];
      cdf_[v] = running;
      if (dist[v] > 0.0) last_positive_ = static_cast<TokenId>(v);
    }
  }

  TokenId operator()(double u) const noexcept {
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) return last_positive_;
    return static_cast<TokenId>(it - cdf_.begin());
  }

  std::vector<OneHotSample> draw(std::size_t count, std::uint64_t seed) const {
    std::vector<OneHotSample> out(count);
    SplitMix64 rng(seed);
    for (auto& s : out) s.index = (*this)(rng.uniform());
    return out;
  }

 private:
  std::vector<double> cdf_;
  TokenId last_positive_ = 0;
};

/// Draws i.i.d. uniform tokens irrespective of the prefix.
class UniformGenerator final : public Generator {
 public:
  explicit UniformGenerator(Vocabulary vocab)
      : vocab_(std::move(vocab)), dist_(CategoricalDistribution::uniform(vocab_.size())), sampler_(dist_) {}

  const Vocabulary& vocabulary() const override { return vocab_; }

  std::vector<OneHotSample> sample_next(TokenView /*prefix*/, std::size_t count,
                                        std::uint64_t seed) const override {
    return sampler_.draw(count, seed);
  }

  bool has_true_next_dist() const override { return true; }
  CategoricalDistribution true_next_dist(TokenView /*prefix*/) const override { return dist_; }

 private:
  Vocabulary vocab_;
  CategoricalDistribution dist_;
  InverseCdfSampler sampler_;
};

inline GeneratorHandle make_uniform_generator(const Vocabulary& vocab) {
  return std::make_shared<UniformGenerator>(vocab);
}

/// Order-k Markov chain over token ids. Contexts never seen in training map
/// to `fallback`.
struct MarkovModel {
  std::size_t order = 0;
  std::size_t vocab_size = 0;
  std::map<TokenSequence, CategoricalDistribution> transitions;
  CategoricalDistribution fallback = CategoricalDistribution::uniform(2);

  /// Distribution for the next token after `prefix`; prefixes shorter than
  /// the order use the fallback.
  const CategoricalDistribution& next(TokenView prefix) const {
    if (order == 0 || prefix.size() < order) return fallback;
    TokenSequence context(prefix.end() - static_cast<std::ptrdiff_t>(order), prefix.end());
    auto it = transitions.find(context);
    return it == transitions.end() ? fallback : it->second;
  }
};

/// Maximum-likelihood transition table with additive smoothing:
///   p(v | c) = (count(c -> v) + pseudo_count) / (count(c) + pseudo_count * |V|)
/// For order 0 the same estimate over unigram counts becomes the fallback;
/// otherwise the fallback is uniform.
inline MarkovModel train_markov(TokenView corpus, std::size_t order, double pseudo_count,
                                std::size_t vocab_size) {
  if (vocab_size < 2) throw Error(ErrorKind::InvalidVocabulary, "vocabulary needs at least 2 symbols");
  if (!(pseudo_count >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "pseudo_count must be non-negative");
  }
  if (corpus.size() < order + 1) {
    throw Error(ErrorKind::CorpusTooShort, "corpus of length " + std::to_string(corpus.size()) +
                                               " cannot train an order-" + std::to_string(order) + " model");
  }
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i] >= vocab_size) {
      throw Error(ErrorKind::InvalidToken, "token id " + std::to_string(corpus[i]) + " at offset " +
                                               std::to_string(i) + " outside vocabulary");
    }
  }

  const auto normalize = [&](const std::vector<std::int64_t>& counts) {
    std::int64_t total = 0;
    for (auto c : counts) total += c;
    const double denom = static_cast<double>(total) + pseudo_count * static_cast<double>(vocab_size);
    std::vector<double> probs(vocab_size);
    for (std::size_t v = 0; v < vocab_size; ++v) {
      probs[v] = (static_cast<double>(counts[v]) + pseudo_count) / denom;
    }
    return CategoricalDistribution(std::move(probs));
  };

  MarkovModel model;
  model.order = order;
  model.vocab_size = vocab_size;
  if (order == 0) {
    std::vector<std::int64_t> counts(vocab_size, 0);
    for (TokenId t : corpus) ++counts[t];
    model.fallback = normalize(counts);
    return model;
  }

  std::map<TokenSequence, std::vector<std::int64_t>> counts;
  for (std::size_t i = order; i < corpus.size(); ++i) {
    TokenSequence context(corpus.begin() + static_cast<std::ptrdiff_t>(i - order),
                          corpus.begin() + static_cast<std::ptrdiff_t>(i));
    auto [it, inserted] = counts.try_emplace(std::move(context), vocab_size, 0);
    ++it->second[corpus[i]];
  }
  for (const auto& [context, row] : counts) {
    model.transitions.emplace(context, normalize(row));
  }
  model.fallback = CategoricalDistribution::uniform(vocab_size);
  return model;
}

class MarkovGenerator final : public Generator {
 public:
  MarkovGenerator(MarkovModel model, Vocabulary vocab)
      : model_(std::move(model)), vocab_(std::move(vocab)), fallback_sampler_(model_.fallback) {
    if (model_.vocab_size != vocab_.size() || model_.fallback.size() != vocab_.size()) {
      throw Error(ErrorKind::VocabMismatch, "Markov model and vocabulary sizes differ");
    }
    for (const auto& [context, dist] : model_.transitions) {
      if (dist.size() != vocab_.size()) {
        throw Error(ErrorKind::VocabMismatch, "transition row has wrong size");
      }
      samplers_.emplace(context, InverseCdfSampler(dist));
    }
  }

  const Vocabulary& vocabulary() const override { return vocab_; }

  std::vector<OneHotSample> sample_next(TokenView prefix, std::size_t count,
                                        std::uint64_t seed) const override {
    return sampler_for(prefix).draw(count, seed);
  }

  bool has_true_next_dist() const override { return true; }
  CategoricalDistribution true_next_dist(TokenView prefix) const override { return model_.next(prefix); }

  const MarkovModel& model() const noexcept { return model_; }

 private:
  const InverseCdfSampler& sampler_for(TokenView prefix) const {
    const std::size_t k = model_.order;
    if (k == 0 || prefix.size() < k) return fallback_sampler_;
    TokenSequence context(prefix.end() - static_cast<std::ptrdiff_t>(k), prefix.end());
    auto it = samplers_.find(context);
    return it == samplers_.end() ? fallback_sampler_ : it->second;
  }

  MarkovModel model_;
  Vocabulary vocab_;
  InverseCdfSampler fallback_sampler_;
  std::map<TokenSequence, InverseCdfSampler> samplers_;
};

inline GeneratorHandle make_markov_generator(MarkovModel model, const Vocabulary& vocab) {
  return std::make_shared<MarkovGenerator>(std::move(model), vocab);
}

}  // namespace lmapprox
