#include "goalforge/reward.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace goalforge {

// ---------------------------------------------------------------------------
// Scales
// ---------------------------------------------------------------------------

ScaleTable::ScaleTable(const StateSchema& schema) {
  for (const auto& f : schema.fields()) {
    names_.push_back(f.name);
    if (f.min && f.max) ranges_.push_back(Interval{*f.min, *f.max});
    else ranges_.push_back(std::nullopt);
  }
}

void ScaleTable::set(std::size_t i, Interval range) { ranges_.at(i) = range; }

bool ScaleTable::complete() const {
  return std::all_of(ranges_.begin(), ranges_.end(), [](const auto& r) { return r.has_value(); });
}

double ScaleTable::scale_of(const StateExpr& expr) const {
  std::vector<Interval> boxes(ranges_.size());
  for (auto i : expr.fields()) {
    if (i >= ranges_.size() || !ranges_[i]) {
      throw Error(ErrorKind::MissingScale,
                  "no scale for field '" + (i < names_.size() ? names_[i] : std::to_string(i)) + "'");
    }
    boxes[i] = *ranges_[i];
  }
  double width = expr.bounds(boxes).width();
  if (!(width > 0.0) || !std::isfinite(width)) {
    throw Error(ErrorKind::DegenerateRange, "expression " + expr.to_string() + " has zero scale");
  }
  return width;
}

ScaleTable scales_from_samples(const StateSchema& schema, const std::vector<Eigen::VectorXd>& samples) {
  ScaleTable table(schema);
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (table.range(i)) continue;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& s : samples) {
      lo = std::min(lo, s(static_cast<Eigen::Index>(i)));
      hi = std::max(hi, s(static_cast<Eigen::Index>(i)));
    }
    if (!(hi > lo)) {
      throw Error(ErrorKind::DegenerateRange,
                  "field '" + schema.field(i).name + "' did not vary while sampling; declare its bounds");
    }
    double margin = 0.025 * (hi - lo);
    table.set(i, Interval{lo - margin, hi + margin});
  }
  return table;
}

void ConditioningConfig::validate() const {
  if (!(max_robustness > 0.0)) throw Error(ErrorKind::InvalidConfig, "max_robustness must be positive");
  if (!(boost_factor >= 1.0)) throw Error(ErrorKind::InvalidConfig, "boost_factor must be at least 1");
  if (max_episode_steps == 0) throw Error(ErrorKind::InvalidConfig, "max_episode_steps must be positive");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const auto& r = scales.range(i);
    if (r && !(r->width() > 0.0)) {
      throw Error(ErrorKind::DegenerateRange, "field '" + scales.name(i) + "' has an empty range");
    }
  }
}

// ---------------------------------------------------------------------------
// Conditioning
// ---------------------------------------------------------------------------

double condition(double scaled, const ConditioningConfig& cfg) {
  if (scaled > 0.0) scaled *= cfg.boost_factor;
  return std::clamp(scaled, -cfg.max_robustness, cfg.max_robustness);
}

namespace {

double scaled_raw(const Formula& f, const Eigen::Ref<const Eigen::VectorXd>& state, const ScaleTable& scales) {
  switch (f.op()) {
    case Formula::Op::True: return std::numeric_limits<double>::infinity();
    case Formula::Op::Pred: return f.pred().robustness(state) / scales.scale_of(f.pred().expr());
    case Formula::Op::Not: return -scaled_raw(f.child(0), state, scales);
    case Formula::Op::And:
      return std::min(scaled_raw(f.child(0), state, scales), scaled_raw(f.child(1), state, scales));
    case Formula::Op::Or:
      return std::max(scaled_raw(f.child(0), state, scales), scaled_raw(f.child(1), state, scales));
    default:
      throw Error(ErrorKind::TemporalNodePresent, "guard " + f.to_sexpr() + " has a temporal operator");
  }
}

void require_finite(const Eigen::Ref<const Eigen::VectorXd>& state) {
  if (!state.allFinite()) throw Error(ErrorKind::NonFiniteState, "state holds a non-finite value");
}

}  // namespace

double scaled_robustness(const Predicate& p, const Eigen::Ref<const Eigen::VectorXd>& state,
                         const ConditioningConfig& cfg) {
  return condition(p.robustness(state) / cfg.scales.scale_of(p.expr()), cfg);
}

double scaled_guard_robustness(const Formula& guard, const Eigen::Ref<const Eigen::VectorXd>& state,
                               const ConditioningConfig& cfg) {
  return condition(scaled_raw(guard, state, cfg.scales), cfg);
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

std::string_view to_string(StepEvent event) {
  switch (event) {
    case StepEvent::SelfLoop: return "SelfLoop";
    case StepEvent::Transition: return "Transition";
    case StepEvent::TerminalAccept: return "TerminalAccept";
    case StepEvent::TerminalTrap: return "TerminalTrap";
    case StepEvent::TimeLimit: return "TimeLimit";
  }
  return "?";
}

std::string_view to_string(Termination reason) {
  switch (reason) {
    case Termination::None: return "None";
    case Termination::AcceptTerminal: return "AcceptTerminal";
    case Termination::Trap: return "Trap";
    case Termination::TimeLimit: return "TimeLimit";
  }
  return "?";
}

RewardEngine::RewardEngine(const Sfspa& automaton, ConditioningConfig config)
    : automaton_(&automaton), config_(std::move(config)), run_(automaton) {
  config_.validate();
  for (const auto& p : automaton.atoms()) config_.scales.scale_of(p.expr());
}

void RewardEngine::reset() {
  run_.reset();
  t_ = 0;
  termination_ = Termination::None;
}

StepResult RewardEngine::evaluate(StateId q, std::size_t t, const Eigen::Ref<const Eigen::VectorXd>& next_state) const {
  require_finite(next_state);
  const Sfspa& a = *automaton_;
  if (q >= a.size()) throw Error(ErrorKind::MalformedAutomaton, "no automaton state " + std::to_string(q));
  if (a.is_trap(q) || a.is_terminal(q) || t >= config_.max_episode_steps) {
    throw Error(ErrorKind::SteppedAfterTermination, "no step from a finished episode");
  }
  const Edge* self = a.self_loop(q);
  const Edge* taken = a.enabled_edge(q, next_state);

  StepResult r;
  if (taken) r.edge = static_cast<std::size_t>(taken - a.edges().data());
  r.automaton_state = taken ? taken->to : q;

  auto rho = [&](const Edge& e) { return scaled_guard_robustness(e.guard, next_state, config_); };
  if (a.is_accepting(q) && self) {
    r.step_reward = rho(*self);
  } else if (taken && !taken->is_self_loop()) {
    r.step_reward = rho(*taken);
  } else {
    double best = -std::numeric_limits<double>::infinity();
    for (auto ei : a.outgoing(q)) {
      const Edge& e = a.edges()[ei];
      if (e.is_self_loop() || a.is_trap(e.to)) continue;
      best = std::max(best, rho(e));
    }
    if (best == -std::numeric_limits<double>::infinity()) best = self ? rho(*self) : 0.0;
    r.step_reward = best;
  }
  r.event = taken && !taken->is_self_loop() ? StepEvent::Transition : StepEvent::SelfLoop;

  const double remaining = static_cast<double>(config_.max_episode_steps - t);
  if (a.is_terminal(r.automaton_state)) {
    r.terminal_reward = config_.max_robustness * remaining;
    r.event = StepEvent::TerminalAccept;
  } else if (a.is_trap(r.automaton_state)) {
    r.terminal_reward = -config_.max_robustness * remaining;
    r.event = StepEvent::TerminalTrap;
  } else if (t + 1 >= config_.max_episode_steps) {
    r.event = StepEvent::TimeLimit;
  }
  r.reward = r.step_reward + r.terminal_reward;
  r.done = r.event == StepEvent::TerminalAccept || r.event == StepEvent::TerminalTrap ||
           r.event == StepEvent::TimeLimit;
  return r;
}

StepResult RewardEngine::step(const Eigen::Ref<const Eigen::VectorXd>& next_state) {
  if (terminated()) {
    throw Error(ErrorKind::SteppedAfterTermination,
                "episode already ended (" + std::string(to_string(termination_)) + ")");
  }
  StepResult r = evaluate(run_.current(), t_, next_state);
  run_.advance(next_state);
  switch (r.event) {
    case StepEvent::TerminalAccept: termination_ = Termination::AcceptTerminal; break;
    case StepEvent::TerminalTrap: termination_ = Termination::Trap; break;
    case StepEvent::TimeLimit: termination_ = Termination::TimeLimit; break;
    default: break;
  }
  ++t_;
  return r;
}

// ---------------------------------------------------------------------------
// Episode log records
// ---------------------------------------------------------------------------

namespace {

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd json_vector(const nlohmann::json& j) {
  auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

StepEvent parse_event(const std::string& text) {
  for (auto e : {StepEvent::SelfLoop, StepEvent::Transition, StepEvent::TerminalAccept, StepEvent::TerminalTrap,
                 StepEvent::TimeLimit}) {
    if (to_string(e) == text) return e;
  }
  throw Error(ErrorKind::Io, "unknown step event '" + text + "'");
}

}  // namespace

std::string StepRecord::to_json_line() const {
  nlohmann::json j = {{"episode", episode},
                      {"t", t},
                      {"state", vector_json(state)},
                      {"action", vector_json(action)},
                      {"automaton_state", automaton_state},
                      {"event", to_string(event)},
                      {"reward", reward},
                      {"robustness", robustness}};
  return j.dump();
}

StepRecord StepRecord::from_json_line(std::string_view line) {
  try {
    auto j = nlohmann::json::parse(line);
    StepRecord r;
    r.episode = j.value("episode", std::size_t{0});
    r.t = j.at("t").get<std::size_t>();
    r.state = json_vector(j.at("state"));
    r.action = json_vector(j.at("action"));
    r.automaton_state = j.at("automaton_state").get<StateId>();
    r.event = parse_event(j.at("event").get<std::string>());
    r.reward = j.at("reward").get<double>();
    r.robustness = j.at("robustness").get<std::map<std::string, double>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Io, std::string("bad episode record: ") + e.what());
  }
}

std::map<std::string, double> goal_robustness(const GoalProgram& program,
                                              const Eigen::Ref<const Eigen::VectorXd>& state) {
  std::map<std::string, double> out;
  for (const auto& atom : program.atoms()) out[atom.name] = Predicate::from_goal(atom).robustness(state);
  return out;
}

}  // namespace goalforge
