#pragma once

// Generator spec strings:
//   builtin:uniform
//   builtin:markov:order=<k>:train=<path>[:pseudo=<x>]
//   external:cmd=<shell command>
// Markov models are trained on the whole text8-charset file at <path>.
// Field values cannot contain ':' except for the external command, which
// takes the rest of the string verbatim.

#include <charconv>
#include <map>
#include <string>
#include <string_view>

#include "lmapprox/bridge.hpp"
#include "lmapprox/corpus.hpp"
#include "lmapprox/generators.hpp"

namespace lmapprox {

inline constexpr double kDefaultPseudoCount = 0.1;

struct MarkovSpec {
  std::size_t order = 0;
  std::string train_path;
  double pseudo_count = kDefaultPseudoCount;
};

namespace detail {

[[noreturn]] inline void bad_spec(std::string_view spec, const std::string& why) {
  throw Error(ErrorKind::InvalidGeneratorSpec, "'" + std::string(spec) + "': " + why);
}

inline std::map<std::string, std::string> parse_fields(std::string_view spec, std::string_view fields) {
  std::map<std::string, std::string> out;
  while (!fields.empty()) {
    const auto colon = fields.find(':');
    const auto field = fields.substr(0, colon);
    const auto eq = field.find('=');
    if (eq == std::string_view::npos || eq == 0) bad_spec(spec, "expected key=value, got '" + std::string(field) + "'");
    out[std::string(field.substr(0, eq))] = std::string(field.substr(eq + 1));
    if (colon == std::string_view::npos) break;
    fields.remove_prefix(colon + 1);
  }
  return out;
}

}  // namespace detail

inline MarkovSpec parse_markov_spec(std::string_view spec) {
  constexpr std::string_view head = "builtin:markov:";
  if (!spec.starts_with(head)) detail::bad_spec(spec, "not a builtin:markov spec");
  auto fields = detail::parse_fields(spec, spec.substr(head.size()));
  MarkovSpec out;
  if (!fields.contains("order")) detail::bad_spec(spec, "missing order=<k>");
  if (!fields.contains("train")) detail::bad_spec(spec, "missing train=<path>");
  const auto& order = fields["order"];
  auto [ptr, ec] = std::from_chars(order.data(), order.data() + order.size(), out.order);
  if (ec != std::errc{} || ptr != order.data() + order.size()) detail::bad_spec(spec, "order must be a non-negative integer");
  out.train_path = fields["train"];
  if (out.train_path.empty()) detail::bad_spec(spec, "train path is empty");
  if (auto it = fields.find("pseudo"); it != fields.end()) {
    try {
      std::size_t used = 0;
      out.pseudo_count = std::stod(it->second, &used);
      if (used != it->second.size() || !(out.pseudo_count >= 0.0)) throw std::invalid_argument("pseudo");
    } catch (const std::exception&) {
      detail::bad_spec(spec, "pseudo must be a non-negative number");
    }
  }
  for (const auto& [key, value] : fields) {
    if (key != "order" && key != "train" && key != "pseudo") detail::bad_spec(spec, "unknown field '" + key + "'");
  }
  return out;
}

/// Builds the Markov model described by a builtin:markov spec.
inline MarkovModel train_markov_from_spec(const MarkovSpec& spec) {
  const auto corpus = load_char_corpus(spec.train_path);
  return train_markov(corpus.data(), spec.order, spec.pseudo_count, corpus.vocab().size());
}

/// Resolves a spec string against the text8 vocabulary. `bridge` applies to
/// external generators only.
inline GeneratorHandle make_generator(std::string_view spec, const Vocabulary& vocab, BridgeOptions bridge = {}) {
  if (spec == "builtin:uniform") return make_uniform_generator(vocab);
  if (spec.starts_with("builtin:markov:")) {
    return make_markov_generator(train_markov_from_spec(parse_markov_spec(spec)), vocab);
  }
  constexpr std::string_view external = "external:cmd=";
  if (spec.starts_with(external)) {
    const auto command = spec.substr(external.size());
    if (command.empty()) detail::bad_spec(spec, "empty command");
    return make_external_generator(std::string(command), vocab, bridge);
  }
  detail::bad_spec(spec, "expected builtin:uniform, builtin:markov:..., or external:cmd=...");
}

}  // namespace lmapprox
