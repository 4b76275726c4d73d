#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <random>

#include "assessment_cases.hpp"
#include "goalforge/assessment.hpp"

using namespace goalforge;
using goalforge::testing::repeat;
using goalforge::testing::scalar_goal;
using goalforge::testing::scalar_log;
using goalforge::testing::scalar_schema;

TEST_CASE("worked examples") {
  for (const auto& c : goalforge::testing::assessment_cases()) {
    INFO(c.name);
    CHECK(std::abs(c.got - c.expected) <= 1e-12);
  }
}

TEST_CASE("operator mismatch") {
  auto reach = scalar_goal("reach R: s.x in Goal.Range(0, 1)");
  auto log = scalar_log({0.5}, 10);
  for (auto fn : {assess_avoid, assess_drive, assess_minmax}) {
    try {
      fn(log, reach);
      FAIL("expected WrongOperator");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::WrongOperator);
    }
  }
  CHECK_NOTHROW(assess_goal(log, reach));
}

TEST_CASE("empty batch") {
  auto program = parse_program("reach R: s.x in Goal.Range(0, 1)", scalar_schema());
  try {
    aggregate({}, program, ScaleTable(scalar_schema()));
    FAIL("expected EmptyBatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyBatch);
  }
}

TEST_CASE("drive extras") {
  auto drive = scalar_goal("drive D: s.x in Goal.Range(0, 1)");
  drive.reference_length = 4.0;
  // out, out, in, out, out, out, in, in
  auto a = assess_drive(scalar_log({3, 2, 0.5, 2, 2, 3, 0.5, 0.5}, 8), drive);
  CHECK(a.success);
  CHECK(a.extras.at("PercentageOfIterationsInTargetRegion") == 37.5);
  CHECK(a.extras.at("MaxTargetReachingIterations") == 3.0);
  // 5 outside, distances 2,1,1,1,2 -> mean 1.4, scaled 0.35; 1 - 5 * 0.35 / 8.
  CHECK(a.gsr == doctest::Approx(1.0 - 5.0 * 0.35 / 8.0));
  auto b = assess_drive(scalar_log({0.5, 3}, 8), drive);
  CHECK_FALSE(b.success);
}

TEST_CASE("minimize and maximize extras") {
  auto minimize = scalar_goal("minimize M: s.x in Goal.RangeBelow(2)");
  auto a = assess_minmax(scalar_log({4, 1, 3}, 10), minimize);
  CHECK(a.success);
  CHECK(a.extras.at("MeanValue") == doctest::Approx(8.0 / 3.0));
  CHECK(a.extras.at("Distance") == 1.0);
  auto maximize = scalar_goal("maximize X: s.x in Goal.RangeAbove(8)");
  auto b = assess_minmax(scalar_log({4, 6}, 10), maximize);
  CHECK_FALSE(b.success);
  CHECK(b.gsr == doctest::Approx(1.0 - 3.0 / 10.0));
}

TEST_CASE("disk target size is the radius") {
  StateSchema plane({{"x", -1.0, 1.0}, {"y", -1.0, 1.0}});
  auto program = parse_program("reach C: norm(s.x, s.y) in Goal.Range(0, 0.2)", plane);
  auto c = GoalContext::make(program.atoms().front(), ScaleTable(plane));
  CHECK(c.target_size == 0.2);
  CHECK(c.distance(Eigen::Vector2d(0.3, 0.4)) == doctest::Approx(0.3));
  CHECK(c.distance(Eigen::Vector2d(0.1, 0.0)) == 0.0);
}

TEST_CASE("gsr stays in [0, 1] on fuzzed logs") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> x(-20.0, 30.0);
  std::uniform_int_distribution<std::size_t> len(1, 40);
  auto program = parse_program(
      "reach R: s.x in Goal.Range(0, 1) and avoid A: s.x in Goal.RangeAbove(5) and "
      "drive D: s.x in Goal.Range(2, 3) and minimize M: s.x in Goal.RangeBelow(1) and "
      "maximize X: abs(s.x) in Goal.RangeAbove(7)",
      scalar_schema());
  for (int batch = 0; batch < 50; ++batch) {
    std::vector<EpisodeLog> logs;
    for (int e = 0; e < 5; ++e) {
      std::vector<double> xs(len(rng));
      for (auto& v : xs) v = x(rng);
      logs.push_back(scalar_log(xs, 40));
    }
    auto report = aggregate(logs, program, ScaleTable(scalar_schema()));
    for (const auto& row : report.per_episode) {
      for (const auto& a : row) {
        CHECK(a.gsr >= 0.0);
        CHECK(a.gsr <= 1.0);
      }
    }
    double min_rate = 1.0;
    for (const auto& g : report.goals) min_rate = std::min(min_rate, g.success_rate);
    CHECK(report.success_rate <= min_rate);
  }
}

TEST_CASE("avoid monotonicity") {
  auto avoid = scalar_goal("avoid A: s.x in Goal.RangeAbove(5)");
  double previous = -1.0;
  for (std::size_t entry = 0; entry <= 100; ++entry) {
    auto xs = repeat(1.0, 100);
    if (entry < 100) xs[entry] = 6.0;
    double gsr = assess_avoid(scalar_log(xs, 100), avoid).gsr;
    CHECK(gsr >= previous);
    previous = gsr;
  }
}

TEST_CASE("single-episode aggregation equals the episode assessment") {
  auto program = parse_program("reach R: s.x in Goal.Range(0, 1) and avoid A: s.x in Goal.RangeAbove(5)",
                               scalar_schema());
  auto log = scalar_log({3, 2, 1.5}, 10);
  auto report = aggregate({log}, program, ScaleTable(scalar_schema()));
  auto scales = ScaleTable(scalar_schema());
  for (std::size_t g = 0; g < 2; ++g) {
    auto direct = assess_goal(log, GoalContext::make(program.atoms()[g], scales));
    CHECK(report.goals[g].success_rate == static_cast<double>(direct.success));
    CHECK(report.goals[g].mean_gsr == direct.gsr);
  }
}

TEST_CASE("drive reference length comes from the batch") {
  auto program = parse_program("drive D: s.x in Goal.Range(0, 1)", scalar_schema());
  // Largest distance in the batch is 4 (x = 5); the first episode is 1 away for 1 of 2 steps.
  std::vector<EpisodeLog> logs = {scalar_log({2, 0.5}, 2), scalar_log({5, 0.5}, 2)};
  auto report = aggregate(logs, program, ScaleTable(scalar_schema()));
  CHECK(report.per_episode[0][0].gsr == doctest::Approx(1.0 - 1.0 * 0.25 / 2.0));
  CHECK(report.per_episode[1][0].gsr == doctest::Approx(1.0 - 1.0 * 1.0 / 2.0));
}

TEST_CASE("report rendering") {
  auto program = parse_program("reach R: s.x in Goal.Range(0, 1)", scalar_schema());
  auto report = aggregate({scalar_log({0.5}, 10)}, program, ScaleTable(scalar_schema()));
  auto doc = nlohmann::json::parse(report.to_json());
  CHECK(doc.at("SuccessRate") == 1.0);
  CHECK(doc.at("OverallGoalSatisfactionRate") == 1.0);
  CHECK(doc.at("goals").at(0).at("name") == "R");
  CHECK(report.to_table().find("overall") != std::string::npos);
  CHECK_THROWS_AS(report.goal("nope"), Error);
}
