#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "goalforge/assessment.hpp"
#include "goalforge/envs.hpp"
#include "goalforge/reward.hpp"
#include "goalforge/sfspa.hpp"

namespace goalforge {

/// A compiled goal bound to an environment.
struct Task {
  std::string goal_text;
  GoalProgram program;
  Sfspa automaton;
  ConditioningConfig conditioning;
  std::shared_ptr<const Environment> env;
};

/// Parses and compiles `goal_text` against `schema`, whose field names must
/// match the environment's state layout. Scales come from the declared
/// bounds, estimated from random rollouts for undeclared fields.
Task make_task(std::string goal_text, std::shared_ptr<const Environment> env, const StateSchema& schema,
               std::size_t max_episode_steps = 100, std::uint64_t seed = 0);
inline Task make_task(std::string goal_text, std::shared_ptr<const Environment> env,
                      std::size_t max_episode_steps = 100, std::uint64_t seed = 0) {
  auto schema = env->schema();
  return make_task(std::move(goal_text), std::move(env), schema, max_episode_steps, seed);
}

/// Feedforward policy over (normalised MDP state ⊕ automaton one-hot).
/// Hidden layers use tanh; the output tanh is mapped onto the action box.
class Policy {
 public:
  Policy() = default;
  Policy(const StateSchema& schema, std::size_t automaton_states, std::vector<std::size_t> hidden,
         Eigen::VectorXd action_low, Eigen::VectorXd action_high);

  std::size_t input_dim() const noexcept { return state_lo_.size() + automaton_states_; }
  std::size_t output_dim() const noexcept { return static_cast<std::size_t>(action_low_.size()); }
  std::size_t parameter_count() const noexcept;
  const std::vector<std::size_t>& hidden() const noexcept { return hidden_; }
  std::size_t automaton_states() const noexcept { return automaton_states_; }

  const Eigen::VectorXd& parameters() const noexcept { return params_; }
  void set_parameters(const Eigen::Ref<const Eigen::VectorXd>& params);

  Eigen::VectorXd input(const Eigen::Ref<const Eigen::VectorXd>& state, StateId automaton_state) const;
  Eigen::VectorXd act(const Eigen::Ref<const Eigen::VectorXd>& state, StateId automaton_state) const;
  /// Forward pass on an explicit input vector.
  Eigen::VectorXd forward(const Eigen::Ref<const Eigen::VectorXd>& input) const;

  std::string to_json() const;
  static Policy from_json(std::string_view text);

 private:
  std::vector<std::size_t> hidden_;
  std::size_t automaton_states_ = 0;
  Eigen::VectorXd state_lo_, state_hi_;
  Eigen::VectorXd action_low_, action_high_;
  Eigen::VectorXd params_;
};

/// Maps (MDP state, automaton state) to an action.
using Controller = std::function<Eigen::VectorXd(const Eigen::VectorXd&, StateId)>;

Controller as_controller(const Policy& policy);

struct EpisodeResult {
  double undiscounted_return = 0.0;
  double discounted_return = 0.0;
  std::size_t steps = 0;
  Termination termination = Termination::None;
  EpisodeLog log;  // filled when recording
};

EpisodeResult rollout(const Task& task, const Controller& controller, std::uint64_t seed, double gamma,
                      bool record = false, std::size_t episode_index = 0);

struct TrainerConfig {
  std::size_t population = 24;
  double elite_fraction = 0.2;
  std::size_t iterations = 60;
  std::size_t episodes_per_candidate = 1;
  double gamma = 0.99;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  std::vector<std::size_t> hidden;  // empty: linear policy
  double init_sigma = 1.0;
  double noise_floor = 0.05;
  double extra_noise = 1.0;  // added exploration std, decaying linearly to zero over the run
  bool full_covariance = true;  // false: diagonal CEM
  std::size_t eval_episodes = 10;  // per-iteration evaluation of the mean
  std::size_t max_interactions = 200000;  // 0: no budget; otherwise never exceeded
  std::size_t max_episode_steps = 100;

  /// Throws InvalidConfig.
  void validate() const;
  std::string to_json() const;
  static TrainerConfig from_json(std::string_view text);
};

struct CurveRow {
  std::size_t iteration = 0;
  std::size_t interactions = 0;
  double mean_return = 0.0;
  double mean_discounted_return = 0.0;
  AssessmentReport report;
};

struct TrainResult {
  Policy best;
  Policy final;
  std::size_t best_iteration = 0;
  std::size_t interactions = 0;
  std::vector<CurveRow> curve;
};

using IterationCallback = std::function<bool(const CurveRow&, const Policy& mean)>;

/// Cross-entropy method over the policy parameters, maximising the
/// discounted return. The callback may return false to stop early.
TrainResult train(const Task& task, const TrainerConfig& config, const IterationCallback& on_iteration = {});

/// Runs `episodes` episodes with deterministic per-episode seeds derived from
/// `seed`, optionally writing the JSONL step log.
AssessmentReport evaluate(const Task& task, const Controller& controller, std::size_t episodes, std::uint64_t seed,
                          std::ostream* jsonl = nullptr, std::size_t* interactions = nullptr);

std::string curve_csv(const std::vector<CurveRow>& curve, const GoalProgram& program);

/// Seed mixing for independent deterministic streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

}  // namespace goalforge
