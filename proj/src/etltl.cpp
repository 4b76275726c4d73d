#include "goalforge/etltl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace goalforge {

// ---------------------------------------------------------------------------
// Predicate
// ---------------------------------------------------------------------------

Predicate::Predicate(std::string name, StateExpr expr, Range range)
    : name_(std::move(name)), expr_(std::move(expr)), range_(range) {
  if (range_.kind == Range::Kind::Closed && expr_.kind() == StateExpr::Kind::Norm &&
      *range_.lower <= 0.0) {
    center_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(expr_.root().args.size()));
    radius_ = *range_.upper;
  }
}

Predicate Predicate::from_goal(const GoalAtom& atom) { return Predicate(atom.name, atom.expr, atom.range); }

Predicate::Relation Predicate::relation() const noexcept {
  switch (range_.kind) {
    case Range::Kind::Closed: return Relation::InRange;
    case Range::Kind::BelowOnly: return Relation::LessThan;
    case Range::Kind::AboveOnly: return Relation::GreaterThan;
  }
  return Relation::InRange;
}

double Predicate::robustness(const Eigen::Ref<const Eigen::VectorXd>& state) const {
  if (!state.allFinite()) {
    throw Error(ErrorKind::NonFiniteState, "state contains a non-finite value");
  }
  if (center_) {
    return *radius_ - (expr_.norm_components(state) - *center_).norm();
  }
  const double x = expr_.evaluate(state);
  switch (range_.kind) {
    case Range::Kind::BelowOnly: return *range_.upper - x;
    case Range::Kind::AboveOnly: return x - *range_.lower;
    case Range::Kind::Closed: {
      const double center = 0.5 * (*range_.lower + *range_.upper);
      const double radius = 0.5 * (*range_.upper - *range_.lower);
      return radius - std::abs(x - center);
    }
  }
  return 0.0;
}

std::string Predicate::to_sexpr() const {
  std::string rel;
  switch (range_.kind) {
    case Range::Kind::Closed:
      rel = "(in " + expr_.to_sexpr() + " " + format_number(*range_.lower) + " " +
            format_number(*range_.upper) + ")";
      break;
    case Range::Kind::BelowOnly:
      rel = "(< " + expr_.to_sexpr() + " " + format_number(*range_.upper) + ")";
      break;
    case Range::Kind::AboveOnly:
      rel = "(> " + expr_.to_sexpr() + " " + format_number(*range_.lower) + ")";
      break;
  }
  return "(pred " + name_ + " " + rel + ")";
}

bool operator==(const Predicate& a, const Predicate& b) {
  return a.name_ == b.name_ && a.expr_ == b.expr_ && a.range_ == b.range_;
}

// ---------------------------------------------------------------------------
// Formula
// ---------------------------------------------------------------------------

struct Formula::Node {
  Op op;
  std::optional<Predicate> pred;
  std::vector<Formula> children;
};

namespace {

template <typename... Fs>
std::vector<Formula> children_of(Fs... fs) {
  return std::vector<Formula>{std::move(fs)...};
}

}  // namespace

Formula Formula::truth() { return Formula(std::make_shared<const Node>(Node{Op::True, std::nullopt, {}})); }

Formula Formula::predicate(Predicate p) {
  return Formula(std::make_shared<const Node>(Node{Op::Pred, std::move(p), {}}));
}

Formula Formula::negation(Formula f) {
  return Formula(std::make_shared<const Node>(Node{Op::Not, std::nullopt, children_of(std::move(f))}));
}

Formula Formula::conjunction(Formula a, Formula b) {
  return Formula(std::make_shared<const Node>(Node{Op::And, std::nullopt, children_of(std::move(a), std::move(b))}));
}

Formula Formula::disjunction(Formula a, Formula b) {
  return Formula(std::make_shared<const Node>(Node{Op::Or, std::nullopt, children_of(std::move(a), std::move(b))}));
}

Formula Formula::eventually(Formula f) {
  return Formula(std::make_shared<const Node>(Node{Op::Eventually, std::nullopt, children_of(std::move(f))}));
}

Formula Formula::until(Formula hold, Formula goal) {
  return Formula(std::make_shared<const Node>(
      Node{Op::Until, std::nullopt, children_of(std::move(hold), std::move(goal))}));
}

Formula Formula::next(Formula f) {
  return Formula(std::make_shared<const Node>(Node{Op::Next, std::nullopt, children_of(std::move(f))}));
}

Formula Formula::globally(Formula f) {
  return Formula(std::make_shared<const Node>(Node{Op::GloballyK, std::nullopt, children_of(std::move(f))}));
}

Formula::Op Formula::op() const { return node_->op; }
const Predicate& Formula::pred() const { return *node_->pred; }
std::size_t Formula::arity() const { return node_->children.size(); }
const Formula& Formula::child(std::size_t i) const { return node_->children.at(i); }

bool Formula::is_boolean() const {
  switch (node_->op) {
    case Op::True:
    case Op::Pred: return true;
    case Op::Not:
    case Op::And:
    case Op::Or:
      return std::all_of(node_->children.begin(), node_->children.end(),
                         [](const Formula& c) { return c.is_boolean(); });
    default: return false;
  }
}

std::size_t Formula::predicate_count() const {
  if (node_->op == Op::Pred) return 1;
  std::size_t n = 0;
  for (const auto& c : node_->children) n += c.predicate_count();
  return n;
}

std::string Formula::to_sexpr() const {
  auto list = [this](const char* head) {
    std::string out = std::string("(") + head;
    for (const auto& c : node_->children) out += " " + c.to_sexpr();
    return out + ")";
  };
  switch (node_->op) {
    case Op::True: return "true";
    case Op::Pred: return node_->pred->to_sexpr();
    case Op::Not: return list("not");
    case Op::And: return list("and");
    case Op::Or: return list("or");
    case Op::Eventually: return list("F");
    case Op::Until: return list("U");
    case Op::Next: return list("X");
    case Op::GloballyK: return list("G_k");
  }
  return {};
}

bool operator==(const Formula& a, const Formula& b) {
  if (a.node_ == b.node_) return true;
  if (a.node_->op != b.node_->op || a.node_->children.size() != b.node_->children.size()) return false;
  if (a.node_->op == Formula::Op::Pred && !(*a.node_->pred == *b.node_->pred)) return false;
  for (std::size_t i = 0; i < a.node_->children.size(); ++i) {
    if (!(a.node_->children[i] == b.node_->children[i])) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Translation
// ---------------------------------------------------------------------------

Formula translate(const GoalNode& node) {
  if (node.is_atom()) {
    const GoalAtom& atom = node.atom();
    Formula p = Formula::predicate(Predicate::from_goal(atom));
    switch (atom.op) {
      case GoalOperator::Reach: return Formula::eventually(p);
      case GoalOperator::Drive:
      case GoalOperator::Minimize:
      case GoalOperator::Maximize: return Formula::globally(Formula::eventually(p));
      case GoalOperator::Avoid: return Formula::globally(Formula::negation(p));
    }
  }
  const auto& c = node.combination();
  switch (c.op) {
    case Combinator::And: return Formula::conjunction(translate(*c.lhs), translate(*c.rhs));
    case Combinator::Or: return Formula::disjunction(translate(*c.lhs), translate(*c.rhs));
    case Combinator::Then:
      return Formula::eventually(Formula::conjunction(
          translate(*c.lhs), Formula::next(Formula::eventually(translate(*c.rhs)))));
    case Combinator::Until: {
      // `B until A`: lhs is B (must hold), rhs is A (to reach).
      if (c.lhs->is_atom() && c.rhs->is_atom()) {
        return Formula::until(Formula::predicate(Predicate::from_goal(c.lhs->atom())),
                              Formula::predicate(Predicate::from_goal(c.rhs->atom())));
      }
      return Formula::until(translate(*c.lhs), translate(*c.rhs));
    }
  }
  return Formula::truth();
}

Formula translate(const GoalProgram& program) { return translate(program.root()); }

std::optional<std::pair<Formula, Formula>> match_sequence(const Formula& f) {
  if (f.op() != Formula::Op::Eventually) return std::nullopt;
  const Formula& body = f.child(0);
  if (body.op() != Formula::Op::And) return std::nullopt;
  const Formula& rhs = body.child(1);
  if (rhs.op() != Formula::Op::Next || rhs.child(0).op() != Formula::Op::Eventually) return std::nullopt;
  return std::make_pair(body.child(0), rhs.child(0).child(0));
}

// ---------------------------------------------------------------------------
// Robustness
// ---------------------------------------------------------------------------

double robustness_pred(const Predicate& p, const Eigen::Ref<const Eigen::VectorXd>& state) {
  return p.robustness(state);
}

double robustness_bool(const Formula& f, const Eigen::Ref<const Eigen::VectorXd>& state) {
  switch (f.op()) {
    case Formula::Op::True: return std::numeric_limits<double>::infinity();
    case Formula::Op::Pred: return f.pred().robustness(state);
    case Formula::Op::Not: return -robustness_bool(f.child(0), state);
    case Formula::Op::And:
      return std::min(robustness_bool(f.child(0), state), robustness_bool(f.child(1), state));
    case Formula::Op::Or:
      return std::max(robustness_bool(f.child(0), state), robustness_bool(f.child(1), state));
    default:
      throw Error(ErrorKind::TemporalNodePresent,
                  "robustness of temporal formula " + f.to_sexpr() + " is handled by the automaton");
  }
}

bool holds_bool(const Formula& f, const Eigen::Ref<const Eigen::VectorXd>& state) {
  switch (f.op()) {
    case Formula::Op::True: return true;
    case Formula::Op::Pred: return f.pred().holds(state);
    case Formula::Op::Not: return !holds_bool(f.child(0), state);
    case Formula::Op::And: return holds_bool(f.child(0), state) && holds_bool(f.child(1), state);
    case Formula::Op::Or: return holds_bool(f.child(0), state) || holds_bool(f.child(1), state);
    default:
      throw Error(ErrorKind::TemporalNodePresent, "formula " + f.to_sexpr() + " is not boolean");
  }
}

// ---------------------------------------------------------------------------
// Trace oracle
// ---------------------------------------------------------------------------

namespace {

// A letter is a state, or nullptr for the blank state.
using Letters = std::vector<const Eigen::VectorXd*>;

class TraceEvaluator {
 public:
  explicit TraceEvaluator(const Letters& letters) : letters_(letters) {}

  // f at position i, looking at the window [i, end).
  bool at(const Formula& f, std::size_t i, std::size_t end) const {
    switch (f.op()) {
      case Formula::Op::True: return true;
      case Formula::Op::Pred: return letters_[i] != nullptr && f.pred().holds(*letters_[i]);
      case Formula::Op::Not: return !at(f.child(0), i, end);
      case Formula::Op::And: return at(f.child(0), i, end) && at(f.child(1), i, end);
      case Formula::Op::Or: return at(f.child(0), i, end) || at(f.child(1), i, end);
      case Formula::Op::Next: return i + 1 < end && at(f.child(0), i + 1, end);
      case Formula::Op::GloballyK:
        for (std::size_t j = i; j < end; ++j) {
          if (!at(f.child(0), j, end)) return false;
        }
        return true;
      case Formula::Op::Until:
        for (std::size_t j = i; j < end; ++j) {
          if (at(f.child(1), j, end)) return true;
          if (!at(f.child(0), j, end)) return false;
        }
        return false;
      case Formula::Op::Eventually: {
        if (auto seq = match_sequence(f)) return sequence(seq->first, seq->second, i, end);
        for (std::size_t j = i; j < end; ++j) {
          if (at(f.child(0), j, end)) return true;
        }
        return false;
      }
    }
    return false;
  }

 private:
  // first on [anchor, handoff], then eventually second on (handoff, end).
  bool sequence(const Formula& first, const Formula& second, std::size_t anchor,
                std::size_t end) const {
    for (std::size_t h = anchor; h < end; ++h) {  // h is one past the hand-off step
      const bool first_done = h == anchor ? on_blank(first) : at(first, anchor, h);
      if (!first_done) continue;
      for (std::size_t j = h; j < end; ++j) {
        if (at(second, j, end)) return true;
      }
    }
    return false;
  }

  static bool on_blank(const Formula& f) {
    Letters blank{nullptr};
    return TraceEvaluator(blank).at(f, 0, 1);
  }

  const Letters& letters_;
};

}  // namespace

bool trace_satisfies(const Formula& f, std::span<const Eigen::VectorXd> trace, std::size_t horizon) {
  if (trace.empty() || horizon == 0) throw Error(ErrorKind::EmptyTrace, "trace must hold at least one state");
  horizon = std::min(horizon, trace.size());
  Letters letters;
  letters.reserve(horizon);
  for (std::size_t i = 0; i < horizon; ++i) letters.push_back(&trace[i]);
  return TraceEvaluator(letters).at(f, 0, horizon);
}

}  // namespace goalforge
