#pragma once

#include <Eigen/Core>

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "goalforge/goal_lang.hpp"

namespace goalforge {

/// State predicate `f(s) in range`, named after the goal it came from.
///
/// Robustness is signed and positive exactly when the predicate holds:
///   below c       ->  c - x
///   above c       ->  x - c
///   closed [a,b]  ->  (b-a)/2 - |x - (a+b)/2|
///   norm(...) in [a,b] with a <= 0  ->  b - |v|   (a disk around the origin)
class Predicate {
 public:
  enum class Relation { InRange, LessThan, GreaterThan };

  Predicate() = default;
  Predicate(std::string name, StateExpr expr, Range range);
  static Predicate from_goal(const GoalAtom& atom);

  const std::string& name() const noexcept { return name_; }
  const StateExpr& expr() const noexcept { return expr_; }
  const Range& range() const noexcept { return range_; }
  Relation relation() const noexcept;

  /// Set for disk regions only.
  const std::optional<Eigen::VectorXd>& region_center() const noexcept { return center_; }
  const std::optional<double>& region_radius() const noexcept { return radius_; }

  /// Throws NonFiniteState when the state holds NaN or infinity.
  double robustness(const Eigen::Ref<const Eigen::VectorXd>& state) const;
  bool holds(const Eigen::Ref<const Eigen::VectorXd>& state) const { return robustness(state) > 0.0; }

  std::string to_sexpr() const;

  friend bool operator==(const Predicate& a, const Predicate& b);

 private:
  std::string name_;
  StateExpr expr_;
  Range range_;
  std::optional<Eigen::VectorXd> center_;
  std::optional<double> radius_;
};

/// ETLTL formula: T | pred | ¬φ | φ∧ψ | φ∨ψ | Fφ | φUψ | Xφ | G_k φ.
/// Immutable; copies share structure.
class Formula {
 public:
  enum class Op { True, Pred, Not, And, Or, Eventually, Until, Next, GloballyK };

  static Formula truth();
  static Formula predicate(Predicate p);
  static Formula negation(Formula f);
  static Formula conjunction(Formula a, Formula b);
  static Formula disjunction(Formula a, Formula b);
  static Formula eventually(Formula f);
  static Formula until(Formula hold, Formula goal);
  static Formula next(Formula f);
  static Formula globally(Formula f);

  Op op() const;
  const Predicate& pred() const;
  std::size_t arity() const;
  const Formula& child(std::size_t i) const;

  /// No temporal operators anywhere below this node.
  bool is_boolean() const;
  std::size_t predicate_count() const;

  /// Canonical S-expression text, e.g. `(G_k (F (pred A (< s.x 5))))`.
  std::string to_sexpr() const;

  friend bool operator==(const Formula& a, const Formula& b);

 private:
  struct Node;
  explicit Formula(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

/// Applies the translation table goal -> ETLTL:
///   reach      F(p)          drive      G_k(F(p))      avoid  G_k(¬p)
///   minimize   G_k(F(x<c))   maximize   G_k(F(x>c))
///   A and B    A ∧ B         A or B     A ∨ B
///   A then B   F(A ∧ X(F(B)))
///   B until A  p_B U p_A  (operand goals' predicates)
Formula translate(const GoalProgram& program);
Formula translate(const GoalNode& node);

/// Recognises the shape produced for `A then B` and returns (A, B).
std::optional<std::pair<Formula, Formula>> match_sequence(const Formula& f);

double robustness_pred(const Predicate& p, const Eigen::Ref<const Eigen::VectorXd>& state);

/// min / max / negate over a boolean formula. Throws TemporalNodePresent.
double robustness_bool(const Formula& f, const Eigen::Ref<const Eigen::VectorXd>& state);

/// Boolean value of a temporal-free formula with predicate truth = ρ > 0.
bool holds_bool(const Formula& f, const Eigen::Ref<const Eigen::VectorXd>& state);

/// Direct recursive evaluation over a finite trace (test oracle).
///
/// Standard finite-trace semantics with G_k bound to the steps remaining in
/// the evaluation window. The `then` shape F(A ∧ X(F(B))) judges A on the
/// segment from the anchor up to the hand-off step; an empty segment is
/// evaluated as one blank state on which no predicate holds.
bool trace_satisfies(const Formula& f, std::span<const Eigen::VectorXd> trace, std::size_t horizon);
inline bool trace_satisfies(const Formula& f, std::span<const Eigen::VectorXd> trace) {
  return trace_satisfies(f, trace, trace.size());
}

}  // namespace goalforge
