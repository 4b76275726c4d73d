#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "goalforge/error.hpp"

namespace goalforge {

// ---------------------------------------------------------------------------
// State schema
// ---------------------------------------------------------------------------

/// One named entry of the environment state vector. Bounds are optional;
/// missing ones are filled in by scale estimation before reward generation.
struct StateField {
  std::string name;
  std::optional<double> min;
  std::optional<double> max;

  bool operator==(const StateField&) const = default;
};

class StateSchema {
 public:
  StateSchema() = default;
  explicit StateSchema(std::vector<StateField> fields);

  std::size_t size() const noexcept { return fields_.size(); }
  const std::vector<StateField>& fields() const noexcept { return fields_; }
  const StateField& field(std::size_t i) const { return fields_.at(i); }
  std::optional<std::size_t> index_of(std::string_view name) const;

  /// Reads `{"fields": [{"name": .., "min": .., "max": ..}, ...]}`.
  static StateSchema from_json_text(std::string_view text);
  static StateSchema load(const std::string& path);
  std::string to_json_text() const;

  bool operator==(const StateSchema&) const = default;

 private:
  std::vector<StateField> fields_;
};

// ---------------------------------------------------------------------------
// Tokens
// ---------------------------------------------------------------------------

enum class TokenKind {
  KwReach,
  KwDrive,
  KwAvoid,
  KwMinimize,
  KwMaximize,
  KwAnd,
  KwOr,
  KwThen,
  KwUntil,
  KwIn,
  KwRange,       // Goal.Range
  KwRangeAbove,  // Goal.RangeAbove
  KwRangeBelow,  // Goal.RangeBelow
  Ident,
  Number,
  Colon,
  Comma,
  LParen,
  RParen,
  Dot,
  Plus,
  Minus,
  Star,
};

std::string_view to_string(TokenKind kind);

struct Token {
  TokenKind kind;
  std::string text;
  double number = 0.0;
  SourceSpan span;
};

/// Splits goal source into tokens. `#` starts a comment running to the end
/// of the line. Throws IllegalCharacter / UnterminatedNumeral.
std::vector<Token> tokenize(std::string_view text);

// ---------------------------------------------------------------------------
// State expressions
// ---------------------------------------------------------------------------

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const noexcept { return hi - lo; }
};

/// Scalar function of the state vector: field references combined with
/// + - * abs() and norm(...).
class StateExpr {
 public:
  enum class Kind { Field, Constant, Negate, Add, Subtract, Multiply, Abs, Norm };

  struct Node {
    Kind kind;
    std::size_t field = 0;
    std::string field_name;
    double value = 0.0;
    std::vector<std::shared_ptr<const Node>> args;
  };

  StateExpr() = default;
  explicit StateExpr(std::shared_ptr<const Node> root) : root_(std::move(root)) {}

  static StateExpr field(std::size_t index, std::string name);
  static StateExpr constant(double value);
  static StateExpr unary(Kind kind, StateExpr arg);
  static StateExpr binary(Kind kind, StateExpr lhs, StateExpr rhs);
  static StateExpr norm(std::vector<StateExpr> args);

  const Node& root() const { return *root_; }
  Kind kind() const { return root_->kind; }
  bool valid() const noexcept { return root_ != nullptr; }

  double evaluate(const Eigen::Ref<const Eigen::VectorXd>& state) const;

  /// For Norm expressions: the vector whose Euclidean length is the value.
  Eigen::VectorXd norm_components(const Eigen::Ref<const Eigen::VectorXd>& state) const;

  /// Interval enclosure of the expression given per-field ranges.
  Interval bounds(std::span<const Interval> field_ranges) const;

  /// Indices of every referenced field, ascending, without duplicates.
  std::vector<std::size_t> fields() const;

  /// Surface syntax, e.g. `norm(s.x, s.y)`.
  std::string to_string() const;
  /// S-expression form, e.g. `(norm s.x s.y)`.
  std::string to_sexpr() const;

  friend bool operator==(const StateExpr& a, const StateExpr& b);

 private:
  std::shared_ptr<const Node> root_;
};

// ---------------------------------------------------------------------------
// Goals
// ---------------------------------------------------------------------------

struct Range {
  enum class Kind { Closed, AboveOnly, BelowOnly };

  Kind kind = Kind::Closed;
  std::optional<double> lower;
  std::optional<double> upper;

  static Range closed(double lower, double upper);
  static Range above(double lower);
  static Range below(double upper);

  bool contains(double x) const;
  std::string to_string() const;

  bool operator==(const Range&) const = default;
};

enum class GoalOperator { Reach, Drive, Avoid, Minimize, Maximize };
enum class Combinator { And, Or, Then, Until };

std::string_view to_string(GoalOperator op);
std::string_view to_string(Combinator op);

struct GoalAtom {
  GoalOperator op = GoalOperator::Reach;
  std::string name;
  StateExpr expr;
  Range range;
  SourceSpan span;

  /// Structural equality; ignores spans.
  friend bool operator==(const GoalAtom& a, const GoalAtom& b);
};

struct GoalNode;
using GoalNodePtr = std::shared_ptr<const GoalNode>;

struct GoalCombination {
  Combinator op;
  GoalNodePtr lhs;
  GoalNodePtr rhs;
};

struct GoalNode {
  std::variant<GoalAtom, GoalCombination> value;

  bool is_atom() const noexcept { return std::holds_alternative<GoalAtom>(value); }
  const GoalAtom& atom() const { return std::get<GoalAtom>(value); }
  const GoalCombination& combination() const { return std::get<GoalCombination>(value); }
};

GoalNodePtr make_goal(GoalAtom atom);
GoalNodePtr make_goal(Combinator op, GoalNodePtr lhs, GoalNodePtr rhs);

bool structurally_equal(const GoalNode& a, const GoalNode& b);

class GoalProgram {
 public:
  GoalProgram(GoalNodePtr root, StateSchema schema);

  const GoalNode& root() const { return *root_; }
  const GoalNodePtr& root_ptr() const { return root_; }
  const StateSchema& schema() const noexcept { return schema_; }

  /// Leaves in declaration (left-to-right) order.
  const std::vector<GoalAtom>& atoms() const noexcept { return atoms_; }
  const GoalAtom* find_atom(std::string_view name) const;

 private:
  GoalNodePtr root_;
  StateSchema schema_;
  std::vector<GoalAtom> atoms_;
};

/// Recursive-descent parser. Precedence from loosest to tightest:
/// until, then, or, and; all left-associative.
GoalProgram parse(std::span<const Token> tokens, const StateSchema& schema);

/// tokenize + parse.
GoalProgram parse_program(std::string_view text, const StateSchema& schema);

/// Canonical source text; reparses to a structurally identical program.
std::string pretty_print(const GoalNode& node);
inline std::string pretty_print(const GoalProgram& program) { return pretty_print(program.root()); }

/// Shortest decimal form that round-trips exactly.
std::string format_number(double value);

}  // namespace goalforge
