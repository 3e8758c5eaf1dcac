#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lmapprox {

/// Every failure raised by the library carries one of these kinds so that
/// front ends can map them onto exit codes without string matching.
enum class ErrorKind {
  EmptySampleSet,
  InvalidCounts,
  VocabMismatch,
  InvalidSmoothing,
  InvalidVocabulary,
  InvalidToken,
  InvalidDistribution,
  CorpusTooShort,
  BridgeProtocol,
  Generator,
  UnsupportedCapability,
  InvalidBoundQuery,
  InvalidArgument,
  ZeroProbabilityGold,
  NoPositions,
  CorpusFormat,
  EmptyCorpus,
  SubsetTooLarge,
  InvalidGeneratorSpec,
  Io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptySampleSet: return "EmptySampleSet";
    case ErrorKind::InvalidCounts: return "InvalidCounts";
    case ErrorKind::VocabMismatch: return "VocabMismatch";
    case ErrorKind::InvalidSmoothing: return "InvalidSmoothing";
    case ErrorKind::InvalidVocabulary: return "InvalidVocabulary";
    case ErrorKind::InvalidToken: return "InvalidToken";
    case ErrorKind::InvalidDistribution: return "InvalidDistribution";
    case ErrorKind::CorpusTooShort: return "CorpusTooShort";
    case ErrorKind::BridgeProtocol: return "BridgeProtocolError";
    case ErrorKind::Generator: return "GeneratorError";
    case ErrorKind::UnsupportedCapability: return "UnsupportedCapability";
    case ErrorKind::InvalidBoundQuery: return "InvalidBoundQuery";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ZeroProbabilityGold: return "ZeroProbabilityGold";
    case ErrorKind::NoPositions: return "NoPositions";
    case ErrorKind::CorpusFormat: return "CorpusFormatError";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::SubsetTooLarge: return "SubsetTooLarge";
    case ErrorKind::InvalidGeneratorSpec: return "InvalidGeneratorSpec";
    case ErrorKind::Io: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when the external generator process misbehaves. `line()` holds the
/// offending protocol line (empty when the process died or timed out).
class BridgeProtocolError : public Error {
 public:
  BridgeProtocolError(const std::string& message, std::string line = {})
      : Error(ErrorKind::BridgeProtocol, line.empty() ? message : message + " [line: " + line + "]"),
        line_(std::move(line)) {}

  const std::string& line() const noexcept { return line_; }

 private:
  std::string line_;
};

/// Wraps a failure that happened while sampling for a specific gold position.
/// `cause()` keeps the kind of the underlying error (BridgeProtocol, ...).
class GeneratorError : public Error {
 public:
  GeneratorError(std::size_t position, ErrorKind cause, const std::string& what)
      : Error(ErrorKind::Generator, "at position " + std::to_string(position) + ": " + what),
        position_(position),
        cause_(cause) {}

  std::size_t position() const noexcept { return position_; }
  ErrorKind cause() const noexcept { return cause_; }

 private:
  std::size_t position_;
  ErrorKind cause_;
};

}  // namespace lmapprox
