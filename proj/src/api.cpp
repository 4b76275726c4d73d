#include "goalforge/api.hpp"

#include <algorithm>
#include <cmath>

namespace goalforge {

const std::vector<std::string_view>& error_names() {
  static const std::vector<std::string_view> names = [] {
    std::vector<std::string_view> out;
    for (int k = static_cast<int>(ErrorKind::IllegalCharacter); k <= static_cast<int>(ErrorKind::Io); ++k) {
      out.push_back(to_string(static_cast<ErrorKind>(k)));
    }
    return out;
  }();
  return names;
}

std::optional<ErrorKind> error_kind_from_name(std::string_view name) {
  const auto& names = error_names();
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<ErrorKind>(it - names.begin());
}

// ---------------------------------------------------------------------------
// CompiledGoal
// ---------------------------------------------------------------------------

CompiledGoal::CompiledGoal(std::string text, GoalProgram program, Sfspa automaton)
    : text_(std::move(text)), program_(std::move(program)), automaton_(std::move(automaton)) {}

std::shared_ptr<const CompiledGoal> CompiledGoal::compile(std::string_view text, const StateSchema& schema) {
  auto program = parse_program(text, schema);
  auto automaton = build(program);
  return std::make_shared<const CompiledGoal>(std::string(text), std::move(program), std::move(automaton));
}

std::shared_ptr<const CompiledGoal> CompiledGoal::compile(std::string_view text, std::string_view schema_json) {
  return compile(text, StateSchema::from_json_text(schema_json));
}

std::vector<std::string> CompiledGoal::goal_names() const {
  std::vector<std::string> out;
  for (const auto& atom : program_.atoms()) out.push_back(atom.name);
  return out;
}

std::string CompiledGoal::etltl() const { return translate(program_).to_sexpr(); }

GoalEngine CompiledGoal::make_engine(const EngineOptions& options) const {
  ConditioningConfig cfg;
  cfg.max_episode_steps = options.max_episode_steps;
  cfg.max_robustness = options.max_robustness;
  cfg.boost_factor = options.boost_factor;
  cfg.scales = ScaleTable(schema());
  for (const auto& [name, range] : options.scales) {
    auto index = schema().index_of(name);
    if (!index) throw Error(ErrorKind::UnknownStateField, "scale given for unknown field '" + name + "'");
    if (!cfg.scales.range(*index)) cfg.scales.set(*index, range);
  }
  for (std::size_t i = 0; i < cfg.scales.size(); ++i) {
    if (!cfg.scales.range(i)) {
      throw Error(ErrorKind::MissingScale, "field '" + cfg.scales.name(i) + "' needs bounds or a scale");
    }
  }
  cfg.validate();
  return GoalEngine(shared_from_this(), std::move(cfg));
}

// ---------------------------------------------------------------------------
// GoalEngine
// ---------------------------------------------------------------------------

GoalEngine::GoalEngine(std::shared_ptr<const CompiledGoal> goal, ConditioningConfig config)
    : goal_(std::move(goal)), engine_(goal_->automaton(), std::move(config)) {}

void GoalEngine::reset() { engine_.reset(); }

Eigen::VectorXd GoalEngine::to_vector(const NamedState& state) const {
  const auto& schema = goal_->schema();
  for (const auto& [name, value] : state) {
    if (!schema.index_of(name)) throw Error(ErrorKind::UnknownStateField, "unknown state field '" + name + "'");
  }
  Eigen::VectorXd s(static_cast<Eigen::Index>(schema.size()));
  for (std::size_t i = 0; i < schema.size(); ++i) {
    auto it = state.find(schema.field(i).name);
    if (it == state.end()) {
      throw Error(ErrorKind::InvalidConfig, "state is missing field '" + schema.field(i).name + "'");
    }
    s(static_cast<Eigen::Index>(i)) = it->second;
  }
  return s;
}

EngineStep GoalEngine::step(const NamedState& state) {
  auto r = engine_.step(to_vector(state));
  EngineStep out;
  out.reward = r.reward;
  out.step_reward = r.step_reward;
  out.terminal_reward = r.terminal_reward;
  out.automaton_state = r.automaton_state;
  out.event = std::string(to_string(r.event));
  out.termination = termination();
  out.done = r.done;
  return out;
}

std::map<std::string, double> GoalEngine::robustness(const NamedState& state) const {
  return goal_robustness(goal_->program(), to_vector(state));
}

}  // namespace goalforge
