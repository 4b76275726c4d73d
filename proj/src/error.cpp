#include "goalforge/error.hpp"

namespace goalforge {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IllegalCharacter: return "IllegalCharacter";
    case ErrorKind::UnterminatedNumeral: return "UnterminatedNumeral";
    case ErrorKind::UnexpectedToken: return "UnexpectedToken";
    case ErrorKind::UnknownStateField: return "UnknownStateField";
    case ErrorKind::InvalidRange: return "InvalidRange";
    case ErrorKind::DuplicateGoalName: return "DuplicateGoalName";
    case ErrorKind::NonFiniteState: return "NonFiniteState";
    case ErrorKind::TemporalNodePresent: return "TemporalNodePresent";
    case ErrorKind::EmptyTrace: return "EmptyTrace";
    case ErrorKind::PredicateOverlap: return "PredicateOverlap";
    case ErrorKind::UnsupportedOperand: return "UnsupportedOperand";
    case ErrorKind::MalformedAutomaton: return "MalformedAutomaton";
    case ErrorKind::MissingScale: return "MissingScale";
    case ErrorKind::DegenerateRange: return "DegenerateRange";
    case ErrorKind::SteppedAfterTermination: return "SteppedAfterTermination";
    case ErrorKind::WrongOperator: return "WrongOperator";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::DivergedNaN: return "DivergedNaN";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

namespace {

std::string decorate(ErrorKind kind, const std::string& message,
                     const std::optional<SourceSpan>& span) {
  std::string out;
  if (span) {
    out += std::to_string(span->line) + ":" + std::to_string(span->column) + ": ";
  }
  out += std::string(to_string(kind)) + ": " + message;
  return out;
}

}  // namespace

Error::Error(ErrorKind kind, const std::string& message, std::optional<SourceSpan> span)
    : std::runtime_error(decorate(kind, message, span)), kind_(kind), span_(span) {}

}  // namespace goalforge
