#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "goalforge/etltl.hpp"
#include "goalforge/goal_lang.hpp"
#include "goalforge/reward.hpp"

namespace goalforge {

struct EpisodeLog {
  std::vector<StepRecord> steps;
  std::size_t max_steps = 0;  // T
};

/// Geometry of one goal needed by the metrics.
struct GoalContext {
  GoalAtom atom;
  Predicate predicate;
  /// Closed ranges: interval width, or the radius for disks. Half-open
  /// ranges: the scale of the test expression.
  double target_size = 1.0;
  /// Drive only: largest distance to the region over the whole batch.
  double reference_length = 0.0;

  static GoalContext make(const GoalAtom& atom, const ScaleTable& scales);
  /// max(0, −ρ): how far `state` is from the goal's region.
  double distance(const Eigen::Ref<const Eigen::VectorXd>& state) const;
  bool inside(const Eigen::Ref<const Eigen::VectorXd>& state) const { return predicate.holds(state); }
};

struct GoalAssessment {
  std::string name;
  GoalOperator op = GoalOperator::Reach;
  bool success = false;
  double gsr = 0.0;
  std::map<std::string, double> extras;
};

/// Throw WrongOperator when the goal's operator does not match.
GoalAssessment assess_reach(const EpisodeLog& log, const GoalContext& goal);
GoalAssessment assess_avoid(const EpisodeLog& log, const GoalContext& goal);
GoalAssessment assess_drive(const EpisodeLog& log, const GoalContext& goal);
GoalAssessment assess_minmax(const EpisodeLog& log, const GoalContext& goal);
GoalAssessment assess_goal(const EpisodeLog& log, const GoalContext& goal);

struct GoalSummary {
  std::string name;
  GoalOperator op = GoalOperator::Reach;
  double success_rate = 0.0;
  double mean_gsr = 0.0;
  std::map<std::string, double> mean_extras;
};

struct AssessmentReport {
  std::size_t episodes = 0;
  std::vector<GoalSummary> goals;  // declaration order
  double success_rate = 0.0;       // every goal successful
  double goal_satisfaction_rate = 0.0;
  std::vector<std::vector<GoalAssessment>> per_episode;

  const GoalSummary& goal(std::string_view name) const;
  std::string to_json() const;
  std::string to_table() const;
};

/// Throws EmptyBatch when `logs` is empty.
AssessmentReport aggregate(const std::vector<EpisodeLog>& logs, const GoalProgram& program, const ScaleTable& scales);

}  // namespace goalforge
