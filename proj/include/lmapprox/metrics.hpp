#pragma once

// Cross-entropy metrics over a gold sequence under teacher forcing:
//   ACE = -(1/n) sum_i log2 q(t_i | t_1 .. t_{i-1}),  BPC = ACE,  PP = 2^ACE.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lmapprox/approximator.hpp"
#include "lmapprox/core.hpp"
#include "lmapprox/parallel.hpp"
#include "lmapprox/seeding.hpp"

namespace lmapprox {

inline constexpr std::uint64_t kDefaultSeed = 20190601;

struct EvalConfig {
  std::int64_t n_samples = 2000;
  double smoothing_eta = 1e-3;
  std::size_t prefix_window = 256;
  std::uint64_t seed = kDefaultSeed;
  /// Evaluated gold indices: begin, begin + stride, ... < end. Index 0 has no
  /// history and is never evaluated; end = 0 means the sequence length.
  std::size_t begin = 1;
  std::size_t end = 0;
  std::size_t stride = 1;
  std::size_t workers = 1;
  bool keep_per_position = false;
};

inline void validate(const EvalConfig& cfg) {
  if (cfg.n_samples < 1) throw Error(ErrorKind::InvalidArgument, "n_samples must be at least 1");
  if (cfg.prefix_window < 1) throw Error(ErrorKind::InvalidArgument, "prefix_window must be at least 1");
  if (!(cfg.smoothing_eta >= 0.0 && cfg.smoothing_eta <= 1.0)) {
    throw Error(ErrorKind::InvalidSmoothing, "eta must lie in [0,1]");
  }
  if (cfg.stride < 1) throw Error(ErrorKind::InvalidArgument, "stride must be at least 1");
  if (cfg.begin < 1) throw Error(ErrorKind::InvalidArgument, "begin must be at least 1");
}

struct PositionLoss {
  std::size_t t = 0;
  double loss_bits = 0.0;
  /// Gold-token probability before smoothing.
  double raw_gold_prob = 0.0;
};

struct EvalReport {
  double ace = 0.0;
  double bpc = 0.0;
  double perplexity = 1.0;
  std::size_t token_count = 0;
  std::size_t zero_gold_events = 0;
  std::int64_t n_used = 0;
  double eta_used = 0.0;
  std::optional<std::vector<PositionLoss>> per_position;
};

/// -log2 dist[gold]. A zero-probability gold token is an error: the caller is
/// expected to smooth first.
inline double log_loss(const CategoricalDistribution& dist, TokenId gold) {
  if (gold >= dist.size()) {
    throw Error(ErrorKind::InvalidToken, "gold token " + std::to_string(gold) + " outside distribution");
  }
  if (dist[gold] <= 0.0) {
    throw Error(ErrorKind::ZeroProbabilityGold, "gold token " + std::to_string(gold) + " has probability 0");
  }
  return -std::log2(dist[gold]);
}

namespace detail {

inline std::vector<std::size_t> evaluation_indices(std::size_t length, const EvalConfig& cfg) {
  const std::size_t end = cfg.end == 0 ? length : std::min(cfg.end, length);
  std::vector<std::size_t> out;
  for (std::size_t t = cfg.begin; t < end; t += cfg.stride) out.push_back(t);
  if (out.empty()) throw Error(ErrorKind::NoPositions, "evaluation range is empty");
  return out;
}

inline EvalReport summarize(std::vector<PositionLoss> losses, std::int64_t n_used, double eta, bool keep) {
  EvalReport r;
  double sum = 0.0;
  for (const auto& l : losses) {
    sum += l.loss_bits;
    if (l.raw_gold_prob == 0.0) ++r.zero_gold_events;
  }
  r.token_count = losses.size();
  r.ace = sum / static_cast<double>(losses.size());
  r.bpc = r.ace;
  r.perplexity = std::exp2(r.ace);
  r.n_used = n_used;
  r.eta_used = eta;
  if (keep) r.per_position = std::move(losses);
  return r;
}

}  // namespace detail

/// Monte-Carlo evaluation. At every selected index t the generator sees only
/// the gold history gold[t - window, t), its next-token distribution is
/// estimated from cfg.n_samples draws seeded with position_seed(cfg.seed, t),
/// smoothed with cfg.smoothing_eta and scored against gold[t].
inline EvalReport evaluate(const Generator& gen, TokenView gold, const EvalConfig& cfg) {
  validate(cfg);
  if (gold.size() < 2) throw Error(ErrorKind::NoPositions, "gold sequence needs at least 2 tokens");
  validate_tokens(gold, gen.vocabulary());
  const auto indices = detail::evaluation_indices(gold.size(), cfg);

  std::vector<PositionLoss> losses(indices.size());
  detail::parallel_for(indices.size(), gen.concurrent_sampling() ? cfg.workers : 1, [&](std::size_t i) {
    const std::size_t t = indices[i];
    const auto est =
        approximate_step(gen, gold_prefix(gold, t, cfg.prefix_window), cfg.n_samples, position_seed(cfg.seed, t), t);
    const double raw = est.dist[gold[t]];
    const double loss = detail::with_position_context(t, [&] { return log_loss(smooth(est.dist, cfg.smoothing_eta), gold[t]); });
    losses[i] = PositionLoss{t, loss, raw};
  });
  return detail::summarize(std::move(losses), cfg.n_samples, cfg.smoothing_eta, cfg.keep_per_position);
}

/// Same loop with the generator's exact next-token distribution: no sampling
/// and no smoothing.
inline EvalReport evaluate_true(const Generator& gen, TokenView gold, const EvalConfig& cfg) {
  if (!gen.has_true_next_dist()) {
    throw Error(ErrorKind::UnsupportedCapability, "generator does not expose true_next_dist");
  }
  validate(cfg);
  if (gold.size() < 2) throw Error(ErrorKind::NoPositions, "gold sequence needs at least 2 tokens");
  validate_tokens(gold, gen.vocabulary());
  const auto indices = detail::evaluation_indices(gold.size(), cfg);

  std::vector<PositionLoss> losses(indices.size());
  detail::parallel_for(indices.size(), gen.concurrent_sampling() ? cfg.workers : 1, [&](std::size_t i) {
    const std::size_t t = indices[i];
    detail::with_position_context(t, [&] {
      const auto dist = gen.true_next_dist(gold_prefix(gold, t, cfg.prefix_window));
      losses[i] = PositionLoss{t, log_loss(dist, gold[t]), dist.at(gold[t])};
    });
  });
  return detail::summarize(std::move(losses), 0, 0.0, cfg.keep_per_position);
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["ace"] = r.ace;
  j["bpc"] = r.bpc;
  j["perplexity"] = r.perplexity;
  j["token_count"] = r.token_count;
  j["zero_gold_events"] = r.zero_gold_events;
  j["n_used"] = r.n_used;
  j["eta_used"] = r.eta_used;
  if (r.per_position) {
    auto losses = nlohmann::ordered_json::array();
    for (const auto& p : *r.per_position) losses.push_back(p.loss_bits);
    j["per_position_log_losses"] = std::move(losses);
  } else {
    j["per_position_log_losses"] = nullptr;
  }
  return j;
}

/// CSV with header `t,loss_bits,raw_gold_prob`.
inline std::string per_position_csv(const EvalReport& r) {
  std::string out = "t,loss_bits,raw_gold_prob\n";
  if (!r.per_position) return out;
  char buf[96];
  for (const auto& p : *r.per_position) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", p.t, p.loss_bits, p.raw_gold_prob);
    out += buf;
  }
  return out;
}

}  // namespace lmapprox
