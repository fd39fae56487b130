#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace engram {

enum class Errc {
  ZeroVector,
  DimensionMismatch,
  ProviderUnavailable,
  EmbeddingFailure,
  DuplicateId,
  UnknownId,
  NegativeElapsed,
  InvalidWeights,
  InvalidConfig,
  EmptyBatch,
  AlreadyTombstone,
  LabilityExpired,
  InsufficientSamples,
  DegenerateLabels,
  GraphUnavailable,
  ParseError,
  InvalidArgument,
};

inline constexpr std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ProviderUnavailable: return "ProviderUnavailable";
    case Errc::EmbeddingFailure: return "EmbeddingFailure";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::UnknownId: return "UnknownId";
    case Errc::NegativeElapsed: return "NegativeElapsed";
    case Errc::InvalidWeights: return "InvalidWeights";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::EmptyBatch: return "EmptyBatch";
    case Errc::AlreadyTombstone: return "AlreadyTombstone";
    case Errc::LabilityExpired: return "LabilityExpired";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::DegenerateLabels: return "DegenerateLabels";
    case Errc::GraphUnavailable: return "GraphUnavailable";
    case Errc::ParseError: return "ParseError";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the engine carries one of the codes above so
/// callers can branch on it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace engram
