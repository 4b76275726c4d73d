#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace goalforge {

/// Location inside a source text. Lines and columns are 1-based.
struct SourceSpan {
  std::size_t offset = 0;
  std::size_t length = 0;
  std::size_t line = 1;
  std::size_t column = 1;
};

enum class ErrorKind {
  IllegalCharacter,
  UnterminatedNumeral,
  UnexpectedToken,
  UnknownStateField,
  InvalidRange,
  DuplicateGoalName,
  NonFiniteState,
  TemporalNodePresent,
  EmptyTrace,
  PredicateOverlap,
  UnsupportedOperand,
  MalformedAutomaton,
  MissingScale,
  DegenerateRange,
  SteppedAfterTermination,
  WrongOperator,
  EmptyBatch,
  DivergedNaN,
  CorruptCheckpoint,
  InvalidConfig,
  Io,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` carries the category and
/// `span()` is set for errors that point into goal source text.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::optional<SourceSpan> span = std::nullopt);

  ErrorKind kind() const noexcept { return kind_; }
  const std::optional<SourceSpan>& span() const noexcept { return span_; }

 private:
  ErrorKind kind_;
  std::optional<SourceSpan> span_;
};

}  // namespace goalforge
