#pragma once

// Monte-Carlo estimate of a generator's next-token distribution: draw N
// one-hot samples for a fixed gold prefix and average them.

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

#include "lmapprox/core.hpp"
#include "lmapprox/generators.hpp"
#include "lmapprox/seeding.hpp"

namespace lmapprox {

/// Estimate of the next-token distribution at one position from `n_used`
/// samples. `counts` are the raw per-symbol tallies; dist = counts / n_used.
struct StepEstimate {
  std::size_t position = 0;
  std::int64_t n_used = 0;
  std::vector<std::int64_t> counts;
  CategoricalDistribution dist;
};

struct CurvePoint {
  std::int64_t n = 0;
  double error = 0.0;
  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

/// Points (N, ||G_{N-alpha} - G_N||_inf) for N = 2*alpha, 3*alpha, ...
struct ConvergenceCurve {
  std::int64_t alpha = 0;
  std::vector<CurvePoint> points;
};

/// Sample mean maintained as integer counts, so every snapshot is the exact
/// ratio counts / n regardless of how the samples were batched.
class RunningEstimate {
 public:
  explicit RunningEstimate(std::size_t vocab_size) : counts_(vocab_size, 0) {}

  void add(TokenId token) {
    ++counts_[token];
    ++n_;
  }

  void merge(const RunningEstimate& other) {
    for (std::size_t v = 0; v < counts_.size(); ++v) counts_[v] += other.counts_[v];
    n_ += other.n_;
  }

  std::int64_t n() const noexcept { return n_; }
  const std::vector<std::int64_t>& counts() const noexcept { return counts_; }
  CategoricalDistribution dist() const { return dist_from_counts(counts_, n_); }

 private:
  std::vector<std::int64_t> counts_;
  std::int64_t n_ = 0;
};

/// ||counts_a / n_a - counts_b / n_b||_inf without materializing distributions.
inline double sup_norm_between_counts(std::span<const std::int64_t> a, std::int64_t n_a,
                                      std::span<const std::int64_t> b, std::int64_t n_b) {
  double best = 0.0;
  const auto da = static_cast<double>(n_a);
  const auto db = static_cast<double>(n_b);
  for (std::size_t v = 0; v < a.size(); ++v) {
    best = std::max(best, std::abs(static_cast<double>(a[v]) / da - static_cast<double>(b[v]) / db));
  }
  return best;
}

namespace detail {

/// Largest number of samples requested from a generator in one call.
inline constexpr std::int64_t kMaxChunk = 1 << 16;

template <typename Fn>
decltype(auto) with_position_context(std::size_t position, Fn&& fn) {
  try {
    return fn();
  } catch (const GeneratorError&) {
    throw;
  } catch (const Error& e) {
    throw GeneratorError(position, e.kind(), e.what());
  } catch (const std::exception& e) {
    throw GeneratorError(position, ErrorKind::Generator, e.what());
  }
}

/// Feeds draws [begin, begin + count) of the stream for `seed` into `acc`.
inline void accumulate(const Generator& gen, TokenView prefix, std::uint64_t seed, std::int64_t begin,
                       std::int64_t count, RunningEstimate& acc,
                       const std::function<void(const RunningEstimate&)>& after_each = {}) {
  const std::size_t vocab_size = gen.vocabulary().size();
  for (std::int64_t done = 0; done < count;) {
    const std::int64_t chunk = std::min(kMaxChunk, count - done);
    const auto samples = gen.sample_next(prefix, static_cast<std::size_t>(chunk),
                                         offset_seed(seed, static_cast<std::uint64_t>(begin + done)));
    if (samples.size() != static_cast<std::size_t>(chunk)) {
      throw Error(ErrorKind::Generator, "generator returned " + std::to_string(samples.size()) +
                                            " samples, expected " + std::to_string(chunk));
    }
    for (const auto& s : samples) {
      if (s.index >= vocab_size) {
        throw Error(ErrorKind::InvalidToken, "generator returned token id " + std::to_string(s.index));
      }
      acc.add(s.index);
      if (after_each) after_each(acc);
    }
    done += chunk;
  }
}

}  // namespace detail

/// Averages `n` samples from `gen` conditioned on `prefix`.
///
/// The draws are split into `shards` contiguous ranges of one stream; each
/// range is counted independently (on its own thread when the generator
/// allows it) and the counts are summed, so the result does not depend on
/// `shards`.
inline StepEstimate approximate_step(const Generator& gen, TokenView prefix, std::int64_t n, std::uint64_t seed,
                                     std::size_t position = 0, std::size_t shards = 1) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "sample count must be at least 1");
  const std::size_t vocab_size = gen.vocabulary().size();
  detail::with_position_context(position, [&] { validate_tokens(prefix, gen.vocabulary()); });

  shards = std::clamp<std::size_t>(shards, 1, static_cast<std::size_t>(n));
  std::vector<RunningEstimate> parts(shards, RunningEstimate(vocab_size));
  std::vector<std::exception_ptr> failures(shards);
  const auto range = [&](std::size_t s) {
    const auto begin = static_cast<std::int64_t>(s) * n / static_cast<std::int64_t>(shards);
    const auto end = static_cast<std::int64_t>(s + 1) * n / static_cast<std::int64_t>(shards);
    try {
      detail::with_position_context(position, [&] { detail::accumulate(gen, prefix, seed, begin, end - begin, parts[s]); });
    } catch (...) {
      failures[s] = std::current_exception();
    }
  };

  if (shards > 1 && gen.concurrent_sampling()) {
    std::vector<std::jthread> workers;
    workers.reserve(shards);
    for (std::size_t s = 0; s < shards; ++s) workers.emplace_back(range, s);
  } else {
    for (std::size_t s = 0; s < shards; ++s) range(s);
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  RunningEstimate total(vocab_size);
  for (const auto& p : parts) total.merge(p);
  return StepEstimate{position, total.n(), total.counts(), total.dist()};
}

/// Tracks one running mean over a single stream of `n_max` samples and
/// reports the sup-norm change between consecutive snapshots taken every
/// `alpha` samples.
inline ConvergenceCurve approximate_curve(const Generator& gen, TokenView prefix, std::int64_t n_max,
                                          std::int64_t alpha, std::uint64_t seed, std::size_t position = 0) {
  if (alpha < 1) throw Error(ErrorKind::InvalidArgument, "alpha must be at least 1");
  if (n_max < 2 * alpha) {
    throw Error(ErrorKind::InvalidArgument, "n_max must be at least 2 * alpha");
  }
  detail::with_position_context(position, [&] { validate_tokens(prefix, gen.vocabulary()); });

  ConvergenceCurve curve;
  curve.alpha = alpha;
  curve.points.reserve(static_cast<std::size_t>(n_max / alpha));
  RunningEstimate acc(gen.vocabulary().size());
  std::vector<std::int64_t> previous;
  const std::int64_t usable = n_max - n_max % alpha;

  detail::with_position_context(position, [&] {
    detail::accumulate(gen, prefix, seed, 0, usable, acc, [&](const RunningEstimate& est) {
      if (est.n() % alpha != 0) return;
      if (!previous.empty()) {
        curve.points.push_back(
            {est.n(), sup_norm_between_counts(previous, est.n() - alpha, est.counts(), est.n())});
      }
      previous = est.counts();
    });
  });
  return curve;
}

}  // namespace lmapprox
