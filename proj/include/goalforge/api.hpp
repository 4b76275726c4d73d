#pragma once

// Flat surface for language bindings: goal text and named state values in,
// plain values out. Everything here is a thin layer over the core headers.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "goalforge/etltl.hpp"
#include "goalforge/reward.hpp"
#include "goalforge/sfspa.hpp"

namespace goalforge {

/// State values keyed by schema field name.
using NamedState = std::map<std::string, double, std::less<>>;

/// Every ErrorKind name in declaration order; bindings mirror these.
const std::vector<std::string_view>& error_names();
std::optional<ErrorKind> error_kind_from_name(std::string_view name);

struct EngineOptions {
  std::size_t max_episode_steps = 100;
  double max_robustness = 2.0;
  double boost_factor = 2.0;
  /// Ranges for fields without declared bounds, keyed by field name.
  std::map<std::string, Interval, std::less<>> scales;
};

struct EngineStep {
  double reward = 0.0;
  double step_reward = 0.0;
  double terminal_reward = 0.0;
  StateId automaton_state = 0;
  std::string event;        // StepEvent name
  std::string termination;  // Termination name, "None" while running
  bool done = false;
};

class GoalEngine;

/// A parsed and compiled goal program. Immutable and shareable.
class CompiledGoal : public std::enable_shared_from_this<CompiledGoal> {
 public:
  /// Throws the parser and compiler errors.
  static std::shared_ptr<const CompiledGoal> compile(std::string_view text, const StateSchema& schema);
  static std::shared_ptr<const CompiledGoal> compile(std::string_view text, std::string_view schema_json);

  const std::string& text() const noexcept { return text_; }
  const GoalProgram& program() const noexcept { return program_; }
  const Sfspa& automaton() const noexcept { return automaton_; }
  const StateSchema& schema() const noexcept { return program_.schema(); }
  std::vector<std::string> goal_names() const;
  std::string etltl() const;
  std::string automaton_json() const { return automaton_.to_json(); }
  std::string automaton_dot() const { return automaton_.to_dot(); }

  /// Throws MissingScale when a field lacks both declared bounds and an
  /// entry in `options.scales`, InvalidConfig for bad options.
  GoalEngine make_engine(const EngineOptions& options = {}) const;

  CompiledGoal(std::string text, GoalProgram program, Sfspa automaton);

 private:
  std::string text_;
  GoalProgram program_;
  Sfspa automaton_;
};

/// Reward engine that keeps its compiled goal alive and speaks named states.
class GoalEngine {
 public:
  GoalEngine(std::shared_ptr<const CompiledGoal> goal, ConditioningConfig config);

  void reset();
  /// Every schema field must be present; unknown names throw
  /// UnknownStateField, missing ones InvalidConfig.
  EngineStep step(const NamedState& state);

  StateId automaton_state() const noexcept { return engine_.automaton_state(); }
  std::size_t t() const noexcept { return engine_.t(); }
  bool done() const noexcept { return engine_.terminated(); }
  std::string termination() const { return std::string(to_string(engine_.termination())); }
  const CompiledGoal& goal() const noexcept { return *goal_; }
  /// Raw robustness of every goal at a named state.
  std::map<std::string, double> robustness(const NamedState& state) const;

 private:
  Eigen::VectorXd to_vector(const NamedState& state) const;

  std::shared_ptr<const CompiledGoal> goal_;
  RewardEngine engine_;
};

}  // namespace goalforge
