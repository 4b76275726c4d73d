#include "goalforge/assessment.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>

namespace goalforge {

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

void require(const GoalContext& goal, std::initializer_list<GoalOperator> ops, const char* what) {
  if (std::find(ops.begin(), ops.end(), goal.atom.op) == ops.end()) {
    throw Error(ErrorKind::WrongOperator, std::string(what) + " metrics requested for " +
                                              std::string(to_string(goal.atom.op)) + " goal '" + goal.atom.name + "'");
  }
}

GoalAssessment start(const GoalContext& goal) {
  GoalAssessment a;
  a.name = goal.atom.name;
  a.op = goal.atom.op;
  return a;
}

}  // namespace

GoalContext GoalContext::make(const GoalAtom& atom, const ScaleTable& scales) {
  GoalContext c{atom, Predicate::from_goal(atom)};
  if (c.predicate.region_radius()) {
    c.target_size = *c.predicate.region_radius();
  } else if (atom.range.kind == Range::Kind::Closed) {
    c.target_size = *atom.range.upper - *atom.range.lower;
  } else {
    c.target_size = scales.scale_of(atom.expr);
  }
  return c;
}

double GoalContext::distance(const Eigen::Ref<const Eigen::VectorXd>& state) const {
  return std::max(0.0, -predicate.robustness(state));
}

GoalAssessment assess_reach(const EpisodeLog& log, const GoalContext& goal) {
  require(goal, {GoalOperator::Reach}, "reach");
  auto a = start(goal);
  if (log.steps.empty()) return a;
  for (const auto& s : log.steps) a.success = a.success || goal.inside(s.state);
  double d = goal.distance(log.steps.back().state);
  a.gsr = d > goal.target_size ? 0.0 : 1.0 - d / goal.target_size;
  a.extras["Distance"] = d;
  return a;
}

GoalAssessment assess_avoid(const EpisodeLog& log, const GoalContext& goal) {
  require(goal, {GoalOperator::Avoid}, "avoid");
  auto a = start(goal);
  std::size_t avoided = log.max_steps;
  for (std::size_t i = 0; i < log.steps.size(); ++i) {
    if (goal.inside(log.steps[i].state)) {
      avoided = i;
      break;
    }
  }
  a.success = avoided == log.max_steps;
  a.gsr = log.max_steps ? clamp01(static_cast<double>(avoided) / static_cast<double>(log.max_steps)) : 0.0;
  a.extras["IterationsAvoided"] = static_cast<double>(avoided);
  return a;
}

GoalAssessment assess_drive(const EpisodeLog& log, const GoalContext& goal) {
  require(goal, {GoalOperator::Drive}, "drive");
  auto a = start(goal);
  const std::size_t n = log.steps.size();
  if (n == 0) return a;
  std::size_t inside = 0, outside = 0, run = 0, longest = 0;
  double out_distance = 0.0;
  for (const auto& s : log.steps) {
    if (goal.inside(s.state)) {
      ++inside;
      run = 0;
    } else {
      ++outside;
      out_distance += goal.distance(s.state);
      longest = std::max(longest, ++run);
    }
  }
  a.success = goal.inside(log.steps.back().state);
  double mean_scaled = 0.0;
  if (outside > 0 && goal.reference_length > 0.0) {
    mean_scaled = out_distance / static_cast<double>(outside) / goal.reference_length;
  }
  a.gsr = clamp01(1.0 - static_cast<double>(outside) * mean_scaled / static_cast<double>(n));
  a.extras["PercentageOfIterationsInTargetRegion"] = 100.0 * static_cast<double>(inside) / static_cast<double>(n);
  a.extras["MaxTargetReachingIterations"] = static_cast<double>(longest);
  return a;
}

GoalAssessment assess_minmax(const EpisodeLog& log, const GoalContext& goal) {
  require(goal, {GoalOperator::Minimize, GoalOperator::Maximize}, "minimize/maximize");
  auto a = start(goal);
  const std::size_t n = log.steps.size();
  if (n == 0) return a;
  double value = 0.0, distance = 0.0;
  for (const auto& s : log.steps) {
    a.success = a.success || goal.inside(s.state);
    value += goal.atom.expr.evaluate(s.state);
    distance += goal.distance(s.state);
  }
  const double mean_distance = distance / static_cast<double>(n);
  a.gsr = a.success ? 1.0 : 1.0 - clamp01(mean_distance / goal.target_size);
  a.extras["MeanValue"] = value / static_cast<double>(n);
  a.extras["Distance"] = goal.distance(log.steps.back().state);
  return a;
}

GoalAssessment assess_goal(const EpisodeLog& log, const GoalContext& goal) {
  switch (goal.atom.op) {
    case GoalOperator::Reach: return assess_reach(log, goal);
    case GoalOperator::Avoid: return assess_avoid(log, goal);
    case GoalOperator::Drive: return assess_drive(log, goal);
    case GoalOperator::Minimize:
    case GoalOperator::Maximize: return assess_minmax(log, goal);
  }
  throw Error(ErrorKind::WrongOperator, "unknown goal operator");
}

AssessmentReport aggregate(const std::vector<EpisodeLog>& logs, const GoalProgram& program,
                           const ScaleTable& scales) {
  if (logs.empty()) throw Error(ErrorKind::EmptyBatch, "no episodes to assess");
  std::vector<GoalContext> goals;
  for (const auto& atom : program.atoms()) {
    auto c = GoalContext::make(atom, scales);
    for (const auto& log : logs) {
      for (const auto& s : log.steps) c.reference_length = std::max(c.reference_length, c.distance(s.state));
    }
    goals.push_back(std::move(c));
  }

  AssessmentReport report;
  report.episodes = logs.size();
  report.goals.resize(goals.size());
  std::size_t joint = 0;
  for (const auto& log : logs) {
    std::vector<GoalAssessment> row;
    bool all = true;
    for (std::size_t g = 0; g < goals.size(); ++g) {
      auto a = assess_goal(log, goals[g]);
      auto& sum = report.goals[g];
      sum.success_rate += a.success;
      sum.mean_gsr += a.gsr;
      for (const auto& [k, v] : a.extras) sum.mean_extras[k] += v;
      all = all && a.success;
      row.push_back(std::move(a));
    }
    joint += all;
    report.per_episode.push_back(std::move(row));
  }
  const double n = static_cast<double>(logs.size());
  double gsr = 0.0;
  for (std::size_t g = 0; g < goals.size(); ++g) {
    auto& sum = report.goals[g];
    sum.name = goals[g].atom.name;
    sum.op = goals[g].atom.op;
    sum.success_rate /= n;
    sum.mean_gsr /= n;
    for (auto& [k, v] : sum.mean_extras) v /= n;
    gsr += sum.mean_gsr;
  }
  report.success_rate = static_cast<double>(joint) / n;
  report.goal_satisfaction_rate = goals.empty() ? 0.0 : gsr / static_cast<double>(goals.size());
  return report;
}

const GoalSummary& AssessmentReport::goal(std::string_view name) const {
  for (const auto& g : goals) {
    if (g.name == name) return g;
  }
  throw Error(ErrorKind::Io, "no goal named '" + std::string(name) + "' in report");
}

std::string AssessmentReport::to_json() const {
  nlohmann::json goals_json = nlohmann::json::array();
  for (const auto& g : goals) {
    goals_json.push_back({{"name", g.name},
                          {"operator", to_string(g.op)},
                          {"SuccessRate", g.success_rate},
                          {"GoalSatisfactionRate", g.mean_gsr},
                          {"extras", g.mean_extras}});
  }
  nlohmann::json doc = {{"episodes", episodes},
                        {"SuccessRate", success_rate},
                        {"OverallGoalSatisfactionRate", goal_satisfaction_rate},
                        {"goals", goals_json}};
  return doc.dump(2);
}

std::string AssessmentReport::to_table() const {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-24s %-9s %12s %8s\n", "goal", "operator", "SuccessRate", "GSR");
  out += line;
  for (const auto& g : goals) {
    std::snprintf(line, sizeof(line), "%-24s %-9s %12.3f %8.3f\n", g.name.c_str(), std::string(to_string(g.op)).c_str(),
                  g.success_rate, g.mean_gsr);
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-24s %-9s %12.3f %8.3f\n", "overall", "", success_rate, goal_satisfaction_rate);
  out += line;
  std::snprintf(line, sizeof(line), "episodes: %zu\n", episodes);
  out += line;
  return out;
}

}  // namespace goalforge
