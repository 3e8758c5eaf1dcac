#include <gtest/gtest.h>

#include <cmath>
#include <mutex>

#include "lmapprox/corpus.hpp"
#include "lmapprox/metrics.hpp"
#include "support/oracles.hpp"

namespace lmapprox {
namespace {

/// Records every prefix it is asked about; always emits token 0.
class RecordingGenerator final : public Generator {
 public:
  const Vocabulary& vocabulary() const override { return vocab_; }
  std::vector<OneHotSample> sample_next(TokenView prefix, std::size_t count, std::uint64_t) const override {
    std::lock_guard lock(mu_);
    seen_.emplace_back(prefix.begin(), prefix.end());
    return std::vector<OneHotSample>(count, OneHotSample{0});
  }
  std::vector<TokenSequence> seen() const {
    std::lock_guard lock(mu_);
    return seen_;
  }

 private:
  Vocabulary vocab_ = text8_vocabulary();
  mutable std::mutex mu_;
  mutable std::vector<TokenSequence> seen_;
};

TEST(LogLoss, Examples) {
  EXPECT_EQ(log_loss(CategoricalDistribution::one_hot(27, 5), 5), 0.0);
  EXPECT_NEAR(log_loss(CategoricalDistribution::uniform(27), 3), 4.7549, 1e-4);
  EXPECT_DOUBLE_EQ(log_loss(CategoricalDistribution({0.25, 0.75}), 0), 2.0);
  try {
    log_loss(CategoricalDistribution::one_hot(27, 5), 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroProbabilityGold);
  }
}

TEST(Evaluate, UniformGeneratorScoresLog27) {
  const auto gen = make_uniform_generator(text8_vocabulary());
  const auto gold = tokenize_text8("the quick brown fox jumps over the lazy dog");
  EvalConfig cfg;
  cfg.n_samples = 100;
  const auto exact = evaluate_true(*gen, gold, cfg);
  EXPECT_NEAR(exact.bpc, std::log2(27.0), 1e-12);
  EXPECT_EQ(exact.token_count, gold.size() - 1);
  EXPECT_EQ(exact.n_used, 0);
  EXPECT_EQ(exact.eta_used, 0.0);
}

// Training text "ab" * 5 at k=1 gives p(b|a) = p(a|b) = 1 with no pseudo
// counts; the alternating gold "abababab" then costs only the smoothing.
TEST(Evaluate, AlternatingOracle) {
  const Vocabulary ab({"a", "b"});
  TokenSequence train, gold;
  for (int i = 0; i < 10; ++i) train.push_back(i % 2);
  for (int i = 0; i < 8; ++i) gold.push_back(i % 2);
  const auto gen = make_markov_generator(train_markov(train, 1, 0.0, 2), ab);
  EvalConfig cfg;
  cfg.n_samples = 500;
  const auto exact = evaluate_true(*gen, gold, cfg);
  EXPECT_EQ(exact.bpc, 0.0);
  const auto approx = evaluate(*gen, gold, cfg);
  EXPECT_NEAR(approx.bpc, -std::log2(1.0 - cfg.smoothing_eta / 2.0), 1e-12);
  EXPECT_LT(approx.bpc - exact.bpc, 0.01);
  EXPECT_EQ(approx.zero_gold_events, 0u);
}

TEST(Evaluate, TeacherForcingSeesOnlyGoldHistory) {
  const RecordingGenerator gen;
  const auto gold = tokenize_text8("hello world");
  EvalConfig cfg;
  cfg.n_samples = 3;
  cfg.prefix_window = 4;
  cfg.smoothing_eta = 0.5;
  evaluate(gen, gold, cfg);
  auto seen = gen.seen();
  std::sort(seen.begin(), seen.end(), [](const auto& a, const auto& b) { return a.size() < b.size(); });
  std::vector<TokenSequence> expected;
  for (std::size_t t = 1; t < gold.size(); ++t) {
    const std::size_t from = t > 4 ? t - 4 : 0;
    expected.emplace_back(gold.begin() + static_cast<std::ptrdiff_t>(from), gold.begin() + static_cast<std::ptrdiff_t>(t));
  }
  std::sort(expected.begin(), expected.end());
  std::sort(seen.begin(), seen.end());
  EXPECT_EQ(seen, expected);
}

TEST(Evaluate, ZeroGoldEventsAreCountedAndSmoothed) {
  const RecordingGenerator gen;
  const auto gold = tokenize_text8("abab");
  EvalConfig cfg;
  cfg.n_samples = 10;
  cfg.keep_per_position = true;
  const auto r = evaluate(gen, gold, cfg);
  // gold[1] = b, gold[2] = a, gold[3] = b; the generator only ever emits a.
  EXPECT_EQ(r.zero_gold_events, 2u);
  const double miss = -std::log2(cfg.smoothing_eta / 27.0);
  const double hit = -std::log2(1.0 - cfg.smoothing_eta + cfg.smoothing_eta / 27.0);
  EXPECT_NEAR(r.ace, (2 * miss + hit) / 3.0, 1e-12);
  ASSERT_TRUE(r.per_position);
  EXPECT_EQ((*r.per_position)[1].raw_gold_prob, 1.0);

  cfg.smoothing_eta = 0.0;
  try {
    evaluate(gen, gold, cfg);
    FAIL();
  } catch (const GeneratorError& e) {
    EXPECT_EQ(e.position(), 1u);
    EXPECT_EQ(e.cause(), ErrorKind::ZeroProbabilityGold);
  }
}

TEST(Evaluate, PerplexityIdentity) {
  const auto chain = testing::random_chain(1, 27, 40);
  const auto gen = make_markov_generator(chain, text8_vocabulary());
  const auto gold = testing::sample_chain(chain, 300, 41);
  EvalConfig cfg;
  cfg.n_samples = 200;
  const auto r = evaluate(*gen, gold, cfg);
  EXPECT_EQ(r.ace, r.bpc);
  EXPECT_NEAR(r.perplexity, std::exp2(r.bpc), 1e-9 * r.perplexity);
  EXPECT_EQ(r.token_count, 299u);
}

// k=1 chain with exact rows: approximate BPC at N=2000 stays within 0.02 bits
// of the exact value over a 2000-token sample.
TEST(Evaluate, MarkovOracleFidelity) {
  const auto chain = testing::random_chain(1, 27, 77, 3.0);
  const auto gen = make_markov_generator(chain, text8_vocabulary());
  const auto gold = testing::sample_chain(chain, 2001, 78);
  EvalConfig cfg;
  cfg.workers = 4;
  const auto exact = evaluate_true(*gen, gold, cfg);
  const auto approx = evaluate(*gen, gold, cfg);
  EXPECT_NEAR(approx.bpc, exact.bpc, 0.02);
  EXPECT_GE(approx.bpc, exact.bpc - 0.005);
}

// Exact-distribution BPC over a long chain sample approaches the entropy rate.
TEST(Evaluate, TrueBpcMatchesEntropyRate) {
  const auto chain = testing::random_chain(1, 27, 5);
  const auto gen = make_markov_generator(chain, text8_vocabulary());
  const auto gold = testing::sample_chain(chain, 200'000, 6);
  EvalConfig cfg;
  cfg.workers = 4;
  EXPECT_NEAR(evaluate_true(*gen, gold, cfg).bpc, testing::entropy_rate_bits(chain), 0.02);
}

// Mean over 10 seeds of |approx - true| does not increase across
// N in {100, 1000, 10000}.
TEST(Evaluate, PenaltyShrinksWithSamples) {
  const auto chain = testing::random_chain(1, 27, 90, 3.0);
  const auto gen = make_markov_generator(chain, text8_vocabulary());
  const auto gold = testing::sample_chain(chain, 400, 91);
  EvalConfig cfg;
  cfg.workers = 8;
  const double exact = evaluate_true(*gen, gold, cfg).bpc;
  double previous = INFINITY;
  for (std::int64_t n : {100, 1000, 10'000}) {
    cfg.n_samples = n;
    double gap = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      cfg.seed = seed;
      gap += std::abs(evaluate(*gen, gold, cfg).bpc - exact) / 10.0;
    }
    EXPECT_LE(gap, previous) << "N=" << n;
    previous = gap;
  }
}

// Property: smoothing an exact distribution raises the mean loss by at most
// -log2(1 - eta) bits, since every smoothed probability is >= (1 - eta) p.
TEST(Evaluate, SmoothingSensitivity) {
  const auto chain = testing::random_chain(1, 27, 3);
  const auto gen = make_markov_generator(chain, text8_vocabulary());
  const auto gold = testing::sample_chain(chain, 500, 4);
  EvalConfig cfg;
  const double exact = evaluate_true(*gen, gold, cfg).bpc;
  for (double eta : {1e-4, 1e-3, 1e-2}) {
    double sum = 0.0;
    for (std::size_t t = 1; t < gold.size(); ++t) {
      sum += log_loss(smooth(gen->true_next_dist(TokenView(gold).subspan(0, t)), eta), gold[t]);
    }
    const double smoothed = sum / static_cast<double>(gold.size() - 1);
    EXPECT_LE(smoothed - exact, -std::log2(1.0 - eta) + 1e-12) << eta;
  }
}

TEST(Evaluate, StrideAndRange) {
  const auto gen = make_uniform_generator(text8_vocabulary());
  const TokenSequence gold(100, 1);
  EvalConfig cfg;
  cfg.n_samples = 10;
  cfg.begin = 10;
  cfg.end = 50;
  cfg.stride = 7;
  cfg.keep_per_position = true;
  const auto r = evaluate(*gen, gold, cfg);
  std::vector<std::size_t> ts;
  for (const auto& p : *r.per_position) ts.push_back(p.t);
  EXPECT_EQ(ts, (std::vector<std::size_t>{10, 17, 24, 31, 38, 45}));
}

TEST(Evaluate, Errors) {
  const auto gen = make_uniform_generator(text8_vocabulary());
  EvalConfig cfg;
  const TokenSequence one{3};
  try {
    evaluate(*gen, one, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoPositions);
  }
  const TokenSequence gold(10, 1);
  cfg.begin = 20;
  try {
    evaluate(*gen, gold, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoPositions);
  }
  cfg = {};
  cfg.smoothing_eta = 2.0;
  try {
    evaluate(*gen, gold, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidSmoothing);
  }
  try {
    evaluate_true(RecordingGenerator{}, gold, EvalConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnsupportedCapability);
  }
  const TokenSequence bad{1, 2, 40};
  EXPECT_THROW(evaluate(*gen, bad, EvalConfig{}), Error);
}

TEST(Evaluate, WorkerCountDoesNotChangeResult) {
  const auto chain = testing::random_chain(2, 27, 8);
  const auto gen = make_markov_generator(chain, text8_vocabulary());
  const auto gold = testing::sample_chain(chain, 500, 9);
  EvalConfig cfg;
  cfg.n_samples = 300;
  cfg.keep_per_position = true;
  const auto one = to_json(evaluate(*gen, gold, cfg)).dump();
  for (std::size_t w : {2u, 3u, 8u}) {
    cfg.workers = w;
    EXPECT_EQ(to_json(evaluate(*gen, gold, cfg)).dump(), one) << w;
  }
}

TEST(Report, JsonFieldsAndCsv) {
  const auto gen = make_uniform_generator(text8_vocabulary());
  EvalConfig cfg;
  cfg.n_samples = 10;
  const auto gold = tokenize_text8("abc");
  auto j = to_json(evaluate(*gen, gold, cfg));
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"ace", "bpc", "perplexity", "token_count", "zero_gold_events", "n_used",
                                            "eta_used", "per_position_log_losses"}));
  EXPECT_TRUE(j["per_position_log_losses"].is_null());
  EXPECT_EQ(j["n_used"], 10);

  cfg.keep_per_position = true;
  const auto r = evaluate_true(*gen, gold, cfg);
  EXPECT_EQ(to_json(r)["per_position_log_losses"].size(), 2u);
  const auto csv = per_position_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,loss_bits,raw_gold_prob");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(csv.find("\n1,4.75"), std::string::npos);
}

}  // namespace
}  // namespace lmapprox
