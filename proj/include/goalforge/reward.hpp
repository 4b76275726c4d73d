#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "goalforge/etltl.hpp"
#include "goalforge/goal_lang.hpp"
#include "goalforge/sfspa.hpp"

namespace goalforge {

/// Per-field value ranges used to normalise robustness. Fields without a
/// range raise MissingScale when a predicate over them is scaled.
class ScaleTable {
 public:
  ScaleTable() = default;
  /// Declared schema bounds; fields missing either bound stay unset.
  explicit ScaleTable(const StateSchema& schema);

  std::size_t size() const noexcept { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const std::optional<Interval>& range(std::size_t i) const { return ranges_.at(i); }
  void set(std::size_t i, Interval range);
  bool complete() const;

  /// Width of `expr` over the field ranges (interval arithmetic). Throws
  /// MissingScale for an unset field, DegenerateRange for zero width.
  double scale_of(const StateExpr& expr) const;

 private:
  std::vector<std::string> names_;
  std::vector<std::optional<Interval>> ranges_;
};

/// Builds a table from observed states: declared bounds win, otherwise the
/// observed [min, max] widened by 2.5% of its width on each side. Throws
/// DegenerateRange for an undeclared field that never changed.
ScaleTable scales_from_samples(const StateSchema& schema, const std::vector<Eigen::VectorXd>& samples);

struct ConditioningConfig {
  double max_robustness = 2.0;
  double boost_factor = 2.0;
  std::size_t max_episode_steps = 100;
  ScaleTable scales;

  /// Throws InvalidConfig / DegenerateRange. Missing scales are reported
  /// when a predicate over the field is first scaled.
  void validate() const;
};

/// Conditioning of an already scaled robustness: boost if positive, clamp.
double condition(double scaled, const ConditioningConfig& cfg);

/// raw / scale, boosted when positive and clamped to ±max_robustness.
double scaled_robustness(const Predicate& p, const Eigen::Ref<const Eigen::VectorXd>& state,
                         const ConditioningConfig& cfg);

/// Scaled robustness of an edge guard: atoms are scaled, combined with
/// min / max / negate, then boosted and clamped once.
double scaled_guard_robustness(const Formula& guard, const Eigen::Ref<const Eigen::VectorXd>& state,
                               const ConditioningConfig& cfg);

enum class StepEvent { SelfLoop, Transition, TerminalAccept, TerminalTrap, TimeLimit };
enum class Termination { None, AcceptTerminal, Trap, TimeLimit };

std::string_view to_string(StepEvent event);
std::string_view to_string(Termination reason);

struct StepResult {
  double reward = 0.0;           // step_reward + terminal_reward
  double step_reward = 0.0;      // within ±max_robustness
  double terminal_reward = 0.0;  // ±max_robustness·(T − t) on early termination
  StateId automaton_state = 0;
  StepEvent event = StepEvent::SelfLoop;
  std::optional<std::size_t> edge;
  bool done = false;
};

/// Per-episode reward generator over (MDP state, automaton state).
///
/// step() receives the state reached after each action; the initial state of
/// the episode is not read. Rewards depend only on the current automaton
/// state, the new MDP state, the step index and the configuration.
class RewardEngine {
 public:
  RewardEngine(const Sfspa& automaton, ConditioningConfig config);

  void reset();
  /// Throws SteppedAfterTermination after the episode ended, NonFiniteState.
  StepResult step(const Eigen::Ref<const Eigen::VectorXd>& next_state);
  /// The step that would follow from automaton state `q` at step index `t`;
  /// step() is exactly this applied to the engine's own (q, t).
  StepResult evaluate(StateId q, std::size_t t, const Eigen::Ref<const Eigen::VectorXd>& next_state) const;

  const Sfspa& automaton() const noexcept { return *automaton_; }
  const ConditioningConfig& config() const noexcept { return config_; }
  StateId automaton_state() const noexcept { return run_.current(); }
  const AutomatonRun& run() const noexcept { return run_; }
  std::size_t t() const noexcept { return t_; }
  bool terminated() const noexcept { return termination_ != Termination::None; }
  Termination termination() const noexcept { return termination_; }

 private:
  const Sfspa* automaton_;
  ConditioningConfig config_;
  AutomatonRun run_;
  std::size_t t_ = 0;
  Termination termination_ = Termination::None;
};

/// One line of an episode log.
struct StepRecord {
  std::size_t episode = 0;
  std::size_t t = 0;
  Eigen::VectorXd state;  // state after the action
  Eigen::VectorXd action;
  StateId automaton_state = 0;
  StepEvent event = StepEvent::SelfLoop;
  double reward = 0.0;
  std::map<std::string, double> robustness;  // raw, per goal

  std::string to_json_line() const;
  static StepRecord from_json_line(std::string_view line);
};

/// Raw robustness of every goal of the program at `state`.
std::map<std::string, double> goal_robustness(const GoalProgram& program,
                                              const Eigen::Ref<const Eigen::VectorXd>& state);

}  // namespace goalforge
