#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "goalforge/etltl.hpp"
#include "goalforge/goal_lang.hpp"

namespace goalforge {

using StateId = std::size_t;

struct AutomatonState {
  std::string label;
  bool accepting = false;
  bool trap = false;
};

/// Transition labelled with a temporal-free formula over the automaton's atoms.
struct Edge {
  StateId from = 0;
  StateId to = 0;
  Formula guard = Formula::truth();

  bool is_self_loop() const noexcept { return from == to; }
};

/// Semi finite state predicate automaton.
///
/// Acceptance states may keep outgoing edges (including a self-loop) so a run
/// can continue improving after acceptance. An acceptance state without any
/// outgoing edge is terminal: reaching it accepts and ends the run. Trap
/// states have no outgoing edges and reject.
class Sfspa {
 public:
  /// Validates references, trap out-degree and pairwise exclusive guards per
  /// state (over all predicate valuations). Throws MalformedAutomaton or
  /// PredicateOverlap.
  Sfspa(std::vector<Predicate> atoms, std::vector<AutomatonState> states, std::vector<Edge> edges,
        StateId initial);

  const std::vector<Predicate>& atoms() const noexcept { return atoms_; }
  const std::vector<AutomatonState>& states() const noexcept { return states_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  StateId initial() const noexcept { return initial_; }
  std::size_t size() const noexcept { return states_.size(); }

  bool is_accepting(StateId q) const { return states_.at(q).accepting; }
  bool is_trap(StateId q) const { return states_.at(q).trap; }
  /// Acceptance state with no outgoing edge.
  bool is_terminal(StateId q) const { return states_.at(q).accepting && outgoing_[q].empty(); }

  /// Indices into edges(), self-loop first.
  const std::vector<std::size_t>& outgoing(StateId q) const { return outgoing_.at(q); }
  const Edge* self_loop(StateId q) const;

  /// Edge whose guard holds at `state`, or nullptr when none does.
  const Edge* enabled_edge(StateId q, const Eigen::Ref<const Eigen::VectorXd>& state) const;

  /// Successor of q: target of the enabled edge, else q itself.
  StateId next(StateId q, const Eigen::Ref<const Eigen::VectorXd>& state) const;

  std::optional<std::size_t> atom_index(std::string_view name) const;

  /// Guard value under a valuation: bit i is the truth of atoms()[i].
  bool guard_holds(const Formula& guard, std::uint64_t valuation) const;

  std::string to_json() const;
  std::string to_dot() const;
  /// FNV-1a 64 over the compact JSON form, as 16 hex digits.
  std::string hash() const;

 private:
  std::vector<Predicate> atoms_;
  std::vector<AutomatonState> states_;
  std::vector<Edge> edges_;
  StateId initial_;
  std::vector<std::vector<std::size_t>> outgoing_;
};

/// Reach / Drive / Minimize / Maximize / Avoid automaton for one goal.
Sfspa build_template(const GoalAtom& atom);

enum class ProductMode { And, Or };

/// Synchronous product; result is reduced to reachable, pairwise
/// distinguishable states with at most one trap and one terminal state.
Sfspa product(const Sfspa& a, const Sfspa& b, ProductMode mode);

/// Automaton for `a then b`: runs `a` until it first accepts, then accepts
/// when `b` holds on some suffix starting after the hand-off.
Sfspa chain_then(const Sfspa& a, const Sfspa& b);

/// `hold until goal` for two goal atoms. Throws UnsupportedOperand when either
/// operand is a composite goal.
Sfspa build_until(const GoalNode& hold, const GoalNode& goal);

/// Automaton for a whole goal tree.
Sfspa build(const GoalNode& node);
inline Sfspa build(const GoalProgram& program) { return build(program.root()); }

/// Runs the automaton over `trace`. Accepts when a terminal acceptance state
/// is reached, or the trace ends in an acceptance state; rejects on a trap.
bool accepts(const Sfspa& automaton, std::span<const Eigen::VectorXd> trace);

/// Per-step history of a run.
struct AutomatonRun {
  struct Entry {
    std::size_t step;
    StateId state;
    std::optional<std::size_t> edge;
  };

  explicit AutomatonRun(const Sfspa& automaton);
  void reset();
  StateId current() const noexcept { return current_; }
  const std::vector<Entry>& history() const noexcept { return history_; }
  /// Advances on one MDP state and returns the edge taken, self-loops
  /// included; nullopt when no guard held or the run already ended.
  std::optional<std::size_t> advance(const Eigen::Ref<const Eigen::VectorXd>& state);

 private:
  const Sfspa* automaton_;
  StateId current_;
  std::vector<Entry> history_;
};

// Structural checks ---------------------------------------------------------

struct StructuralReport {
  std::vector<std::string> violations;
  bool ok() const noexcept { return violations.empty(); }
};

/// Self-loop on every state except traps and terminal acceptance states;
/// traps have out-degree zero; the initial state exists.
StructuralReport check_structure(const Sfspa& automaton);

/// Counts, over the given MDP states, how often some state has more than one
/// enabled edge (nondeterminism) or a non-sink state has none (incomplete).
struct DeterminismReport {
  std::size_t samples = 0;
  std::size_t overlaps = 0;
  std::size_t gaps = 0;
};
DeterminismReport check_determinism(const Sfspa& automaton, std::span<const Eigen::VectorXd> states);

/// Isomorphism of reachable parts, matching atoms by name.
bool isomorphic(const Sfspa& a, const Sfspa& b);

}  // namespace goalforge
