// lmapprox: evaluate stochastic sequence generators as language models.
//
//   lmapprox plan-n   --gamma 1e-3 --epsilon 1e-2 --vocab-size 27
//   lmapprox select-n --generator G --corpus FILE [--alpha 10 --gamma-prime 1e-3 ...]
//   lmapprox curve    --generator G --corpus FILE [--csv curve.csv]
//   lmapprox evaluate --generator G --corpus FILE [--n 2000 --eta 1e-3 --true-bpc ...]
//
// Exit codes: 0 success (including a non-converged N search), 1 usage error,
// 2 runtime error (corpus, generator process, ...).

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lmapprox/lmapprox.hpp"

namespace {

using lmapprox::Error;
using lmapprox::ErrorKind;
using json = nlohmann::ordered_json;

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool is_usage_kind(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument:
    case ErrorKind::InvalidBoundQuery:
    case ErrorKind::InvalidSmoothing:
    case ErrorKind::InvalidGeneratorSpec:
      return true;
    default:
      return false;
  }
}

struct CorpusOptions {
  std::string generator;
  std::string corpus;
  std::string split = "test";
  std::uint64_t seed = lmapprox::kDefaultSeed;
  std::size_t workers = 1;
  std::size_t batch_limit = 1024;
  std::int64_t reply_timeout_ms = 30'000;
};

struct EvaluateOptions {
  CorpusOptions common;
  std::int64_t n = 2000;
  double eta = 1e-3;
  std::size_t prefix_window = 256;
  std::size_t stride = 1;
  std::size_t begin = 1;
  std::size_t max_positions = 0;
  bool true_bpc = false;
  std::string output;
  std::string per_position;
};

struct SelectOptions {
  CorpusOptions common;
  std::int64_t alpha = 10;
  double gamma_prime = 1e-3;
  std::int64_t n_max = 10'000;
  std::size_t subset_size = 64;
  std::size_t prefix_window = 256;
  std::string output;
  std::string csv;
};

struct PlanOptions {
  double gamma = 1e-3;
  double epsilon = 1e-2;
  std::size_t vocab_size = 27;
  std::string output;
};

void add_corpus_options(CLI::App* cmd, CorpusOptions& o, const std::string& default_split) {
  o.split = default_split;
  cmd->add_option("--generator", o.generator,
                  "builtin:uniform | builtin:markov:order=<k>:train=<path>[:pseudo=<x>] | external:cmd=<command>")
      ->required();
  cmd->add_option("--corpus", o.corpus, "text8-charset corpus file")->required();
  cmd->add_option("--split", o.split, "train, validation, test or all")
      ->check(CLI::IsMember({"train", "validation", "test", "all"}))
      ->capture_default_str();
  cmd->add_option("--seed", o.seed, "global seed")->capture_default_str();
  cmd->add_option("--workers", o.workers, "worker threads (external: one process each)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--batch-limit", o.batch_limit, "max tokens per external sample request")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--reply-timeout-ms", o.reply_timeout_ms, "max wait for one external reply")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
  out << contents;
  if (!out) throw Error(ErrorKind::Io, "failed writing '" + path + "'");
}

lmapprox::TokenView select_split(const lmapprox::CharCorpus& corpus, const std::string& split) {
  if (split == "all") return corpus.data();
  return corpus.split(lmapprox::parse_split(split));
}

lmapprox::GeneratorHandle open_generator(const CorpusOptions& o, const lmapprox::Vocabulary& vocab) {
  lmapprox::BridgeOptions bridge;
  bridge.batch_limit = o.batch_limit;
  bridge.processes = o.workers;
  bridge.reply_timeout = std::chrono::milliseconds(o.reply_timeout_ms);
  return lmapprox::make_generator(o.generator, vocab, bridge);
}

json corpus_config(const CorpusOptions& o) {
  return json{{"generator", o.generator}, {"corpus", o.corpus},         {"split", o.split},
              {"seed", o.seed},           {"batch_limit", o.batch_limit}};
}

int run_plan_n(const PlanOptions& o) {
  const lmapprox::BoundQuery q{o.gamma, o.epsilon, o.vocab_size};
  const auto n = lmapprox::hoeffding_bound_n(q);
  const double union_bound =
      std::min(1.0, static_cast<double>(o.vocab_size) * lmapprox::hoeffding_violation_probability(o.gamma, n));
  json j{{"gamma", o.gamma},
         {"epsilon", o.epsilon},
         {"vocab_size", o.vocab_size},
         {"n", n},
         {"union_bound_at_n", union_bound}};
  std::cout << n << "\n" << j.dump() << "\n";
  if (!o.output.empty()) write_file(o.output, j.dump(2) + "\n");
  return 0;
}

int run_evaluate(const EvaluateOptions& o) {
  lmapprox::EvalConfig cfg;
  cfg.n_samples = o.n;
  cfg.smoothing_eta = o.eta;
  cfg.prefix_window = o.prefix_window;
  cfg.seed = o.common.seed;
  cfg.stride = o.stride;
  cfg.begin = o.begin;
  cfg.workers = o.common.workers;
  cfg.keep_per_position = !o.per_position.empty();
  lmapprox::validate(cfg);
  if (cfg.begin < 1) throw UsageError("--begin must be at least 1");

  const auto corpus = lmapprox::load_char_corpus(o.common.corpus);
  const auto gold = select_split(corpus, o.common.split);
  if (o.max_positions > 0) {
    cfg.end = std::min(gold.size(), cfg.begin + o.max_positions * cfg.stride);
  }
  const auto gen = open_generator(o.common, corpus.vocab());
  if (o.true_bpc && !gen->has_true_next_dist()) {
    throw Error(ErrorKind::UnsupportedCapability, "--true-bpc requested but generator has no 'dist' capability");
  }

  const auto report = lmapprox::evaluate(*gen, gold, cfg);
  auto config = corpus_config(o.common);
  config["n"] = o.n;
  config["eta"] = o.eta;
  config["prefix_window"] = o.prefix_window;
  config["begin"] = o.begin;
  config["stride"] = o.stride;
  config["max_positions"] = o.max_positions;

  json out{{"config", config}};
  const auto fields = lmapprox::to_json(report);
  for (const auto& [key, value] : fields.items()) out[key] = value;

  std::printf("BPC %.4f  PPL %.4f  tokens %zu  zero-gold %zu  N %lld  eta %g\n", report.bpc, report.perplexity,
              report.token_count, report.zero_gold_events, static_cast<long long>(report.n_used), report.eta_used);
  if (o.true_bpc) {
    const auto truth = lmapprox::evaluate_true(*gen, gold, cfg);
    out["true_report"] = lmapprox::to_json(truth);
    std::printf("%-12s %-12s\n%-12.4f %-12.4f\n", "BPC", "Approx. BPC", truth.bpc, report.bpc);
  }
  if (!o.output.empty()) write_file(o.output, out.dump(2) + "\n");
  if (!o.per_position.empty()) write_file(o.per_position, lmapprox::per_position_csv(report));
  return 0;
}

int run_select(const SelectOptions& o, bool curve_mode) {
  if (o.alpha < 1) throw UsageError("--alpha must be at least 1");
  if (!(o.gamma_prime > 0.0)) throw UsageError("--gamma-prime must be positive");
  if (o.n_max < 2 * o.alpha) throw UsageError("--n-max must be at least 2 * alpha");
  if (o.subset_size < 1) throw UsageError("--subset-size must be at least 1");

  const auto corpus = lmapprox::load_char_corpus(o.common.corpus);
  const auto split = select_split(corpus, o.common.split);
  const auto positions = lmapprox::sample_positions(split, o.subset_size, o.common.seed, o.prefix_window);
  const auto gen = open_generator(o.common, corpus.vocab());

  lmapprox::EmpiricalPlan plan;
  plan.alpha = o.alpha;
  plan.gamma_prime = o.gamma_prime;
  plan.n_max = o.n_max;
  plan.subset_size = o.subset_size;
  plan = lmapprox::select_n_empirical(*gen, positions, plan, o.common.seed, o.common.workers);

  auto config = corpus_config(o.common);
  config["alpha"] = plan.alpha;
  config["gamma_prime"] = plan.gamma_prime;
  config["n_max"] = plan.n_max;
  config["subset_size"] = plan.subset_size;
  config["prefix_window"] = o.prefix_window;
  json out{{"config", config},
           {"status", lmapprox::to_string(plan.status)},
           {"alpha", plan.alpha},
           {"gamma_prime", plan.gamma_prime},
           {"n_max", plan.n_max},
           {"subset_size", plan.subset_size},
           {"chosen_n", plan.chosen_n ? json(*plan.chosen_n) : json(nullptr)},
           {"final_error", plan.curve.points.empty() ? json(nullptr) : json(plan.curve.points.back().error)}};

  const auto csv = lmapprox::curve_to_csv(plan.curve, plan.gamma_prime);
  if (!o.csv.empty()) write_file(o.csv, csv);
  if (!o.output.empty()) write_file(o.output, out.dump(2) + "\n");
  if (curve_mode && o.csv.empty()) {
    std::cout << csv;
  } else if (plan.chosen_n) {
    std::printf("status converged  chosen_n %lld  (alpha %lld, gamma' %g)\n", static_cast<long long>(*plan.chosen_n),
                static_cast<long long>(plan.alpha), plan.gamma_prime);
  } else {
    std::printf("status not_converged  n_max %lld  final error %g  (gamma' %g)\n",
                static_cast<long long>(plan.n_max), plan.curve.points.back().error, plan.gamma_prime);
  }
  return 0;
}

void add_select_options(CLI::App* cmd, SelectOptions& o) {
  add_corpus_options(cmd, o.common, "validation");
  cmd->add_option("--alpha", o.alpha, "snapshot step")->capture_default_str();
  cmd->add_option("--gamma-prime", o.gamma_prime, "threshold on the averaged snapshot difference")
      ->capture_default_str();
  cmd->add_option("--n-max", o.n_max, "largest N examined")->capture_default_str();
  cmd->add_option("--subset-size", o.subset_size, "positions averaged")->capture_default_str();
  cmd->add_option("--prefix-window", o.prefix_window, "max history tokens fed to the generator")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--output", o.output, "JSON plan output path");
  cmd->add_option("--csv", o.csv, "curve CSV output path (n,error,gamma_prime)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte-Carlo language-model evaluation of stochastic sequence generators"};
  app.require_subcommand(1);

  PlanOptions plan;
  auto* plan_cmd = app.add_subcommand("plan-n", "Hoeffding lower bound on the number of samples");
  plan_cmd->add_option("--gamma", plan.gamma, "per-coordinate accuracy, in (0,1)")->capture_default_str();
  plan_cmd->add_option("--epsilon", plan.epsilon, "bad-event probability, in (0,1)")->capture_default_str();
  plan_cmd->add_option("--vocab-size", plan.vocab_size, "vocabulary size |V|")->capture_default_str();
  plan_cmd->add_option("--output", plan.output, "JSON output path");

  EvaluateOptions eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Approximate BPC / perplexity of a generator on a corpus");
  add_corpus_options(eval_cmd, eval.common, "test");
  eval_cmd->add_option("--n", eval.n, "samples per position")->capture_default_str();
  eval_cmd->add_option("--eta", eval.eta, "uniform smoothing weight in [0,1]")->capture_default_str();
  eval_cmd->add_option("--prefix-window", eval.prefix_window, "max history tokens fed to the generator")
      ->capture_default_str();
  eval_cmd->add_option("--stride", eval.stride, "evaluate every k-th position")->capture_default_str();
  eval_cmd->add_option("--begin", eval.begin, "first evaluated index within the split")->capture_default_str();
  eval_cmd->add_option("--max-positions", eval.max_positions, "cap on evaluated positions (0 = all)")
      ->capture_default_str();
  eval_cmd->add_flag("--true-bpc", eval.true_bpc, "also score the generator's exact distribution");
  eval_cmd->add_option("--output", eval.output, "JSON report output path");
  eval_cmd->add_option("--per-position", eval.per_position, "CSV (t,loss_bits,raw_gold_prob) output path");

  SelectOptions select;
  auto* select_cmd = app.add_subcommand("select-n", "Empirical choice of N from the convergence curve");
  add_select_options(select_cmd, select);
  SelectOptions curve;
  auto* curve_cmd = app.add_subcommand("curve", "Averaged convergence curve as CSV");
  add_select_options(curve_cmd, curve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*plan_cmd) return run_plan_n(plan);
    if (*eval_cmd) return run_evaluate(eval);
    if (*select_cmd) return run_select(select, false);
    if (*curve_cmd) return run_select(curve, true);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const lmapprox::GeneratorError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const Error& e) {
    std::cerr << (is_usage_kind(e.kind()) ? "usage error: " : "error: ") << e.what() << "\n";
    return is_usage_kind(e.kind()) ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
