#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tessa {

enum class Errc {
  // dataset-io
  MissingFile,
  SchemaViolation,
  ChannelMismatch,
  NonFiniteValue,
  IoError,
  InvariantViolation,
  // ts-features
  SeriesTooShort,
  PeriodTooSmall,
  WindowTooLarge,
  LagTooLarge,
  LengthMismatch,
  ZeroVariance,
  EmbedDimTooLarge,
  InvalidConfig,
  // synthetic-gen
  InvalidSpec,
  // llm-gateway
  MissingSlot,
  UnknownSlot,
  BackendUnavailable,
  AuthMissing,
  ResponseEmpty,
  InvalidRequest,
  // agents
  EmptyAnnotation,
  ParseFailure,
  EmptyInput,
  NoFeaturesSelected,
  PreconditionFailed,
  EmptyTermSet,
  // feature-select
  NegativeScore,
  EmptyScores,
  UnknownToken,
  ScoreOutOfRange,
  // judge-eval
  UnpairedItem,
  MetricMismatch,
};

std::string_view to_string(Errc code) noexcept;

/// The one exception type thrown by the library. `detail()` carries
/// auxiliary data such as the raw backend response on a ParseFailure.
class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& message, std::string detail = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        message_(message),
        detail_(std::move(detail)) {}

  Errc code() const noexcept { return code_; }
  /// what() without the code prefix.
  const std::string& message() const noexcept { return message_; }
  const std::string& detail() const noexcept { return detail_; }

private:
  Errc code_;
  std::string message_;
  std::string detail_;
};

}  // namespace tessa
