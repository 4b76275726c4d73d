#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "goalforge/trainer.hpp"

using namespace goalforge;

namespace {

const char* kTankGoal =
    "drive Level: s.level - s.setpoint in Goal.Range(-0.02, 0.02) and avoid Overflow: s.level in "
    "Goal.RangeAbove(0.99)";

Task tank_task(const char* goal = kTankGoal) { return make_task(goal, std::make_shared<TankEnv>()); }

TrainerConfig small_config() {
  TrainerConfig c;
  c.population = 8;
  c.iterations = 3;
  c.eval_episodes = 3;
  c.max_interactions = 0;
  return c;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("trainer config validation") {
  CHECK_NOTHROW(TrainerConfig{}.validate());
  auto bad = [](auto mutate) {
    TrainerConfig c;
    mutate(c);
    return kind_of([&] { c.validate(); });
  };
  CHECK(bad([](TrainerConfig& c) { c.population = 0; }) == ErrorKind::InvalidConfig);
  CHECK(bad([](TrainerConfig& c) { c.elite_fraction = 0.0; }) == ErrorKind::InvalidConfig);
  CHECK(bad([](TrainerConfig& c) { c.elite_fraction = 1.5; }) == ErrorKind::InvalidConfig);
  CHECK(bad([](TrainerConfig& c) { c.gamma = 1.0; }) == ErrorKind::InvalidConfig);
  CHECK(bad([](TrainerConfig& c) { c.extra_noise = -0.1; }) == ErrorKind::InvalidConfig);
  CHECK(bad([](TrainerConfig& c) { c.eval_episodes = 0; }) == ErrorKind::InvalidConfig);
}

TEST_CASE("trainer config JSON round trip") {
  TrainerConfig c;
  c.population = 17;
  c.elite_fraction = 0.3;
  c.hidden = {4, 3};
  c.extra_noise = 0.25;
  c.full_covariance = false;
  c.seed = 99;
  auto back = TrainerConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.extra_noise == 0.25);
  CHECK(back.hidden == std::vector<std::size_t>{4, 3});

  auto partial = TrainerConfig::from_json(R"({"population": 5})");
  CHECK(partial.population == 5);
  CHECK(partial.iterations == TrainerConfig{}.iterations);

  CHECK(kind_of([] { TrainerConfig::from_json(R"({"populaton": 5})"); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([] { TrainerConfig::from_json(R"({"population": "many"})"); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([] { TrainerConfig::from_json("{"); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([] { TrainerConfig::from_json(R"({"gamma": 2})"); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("training is bit-identical for a fixed seed") {
  auto task = tank_task();
  auto config = small_config();
  auto a = train(task, config);
  auto b = train(task, config);
  CHECK(curve_csv(a.curve, task.program) == curve_csv(b.curve, task.program));
  CHECK(a.final.parameters() == b.final.parameters());

  SUBCASE("worker count does not change the result") {
    config.workers = 4;
    auto c = train(task, config);
    CHECK(curve_csv(a.curve, task.program) == curve_csv(c.curve, task.program));
    CHECK(a.final.parameters() == c.final.parameters());
  }
  SUBCASE("a different seed gives a different run") {
    config.seed = 2;
    auto c = train(task, config);
    CHECK(a.final.parameters() != c.final.parameters());
  }
}

TEST_CASE("degenerate population and diagonal covariance") {
  auto task = tank_task();
  auto config = small_config();
  config.population = 1;
  config.elite_fraction = 1.0;
  auto r = train(task, config);
  CHECK(r.curve.size() == config.iterations);
  CHECK(r.final.parameters().allFinite());

  config = small_config();
  config.full_covariance = false;
  config.hidden = {3};
  r = train(task, config);
  CHECK(r.curve.size() == config.iterations);
  CHECK(r.final.hidden() == std::vector<std::size_t>{3});
}

TEST_CASE("interaction budget is never exceeded") {
  auto task = tank_task();
  auto config = small_config();
  config.iterations = 100;
  config.max_interactions = 5000;
  auto r = train(task, config);
  CHECK(r.interactions <= config.max_interactions);
  CHECK_FALSE(r.curve.empty());
  CHECK(r.curve.back().interactions == r.interactions);

  config.max_interactions = 10;  // smaller than one iteration
  r = train(task, config);
  CHECK(r.curve.empty());
  CHECK(r.interactions == 0);
}

TEST_CASE("callback can stop training early") {
  auto task = tank_task();
  auto config = small_config();
  config.iterations = 10;
  std::size_t calls = 0;
  auto r = train(task, config, [&](const CurveRow&, const Policy&) { return ++calls < 2; });
  CHECK(calls == 2);
  CHECK(r.curve.size() == 2);
}

TEST_CASE("curve rows are reproducible from the mean policy") {
  auto task = tank_task();
  auto config = small_config();
  std::vector<AssessmentReport> replayed;
  auto r = train(task, config, [&](const CurveRow&, const Policy& mean) {
    std::vector<EpisodeLog> logs;
    for (std::size_t e = 0; e < config.eval_episodes; ++e) {
      logs.push_back(
          rollout(task, as_controller(mean), derive_seed(config.seed, 3, e), config.gamma, true, e).log);
    }
    replayed.push_back(aggregate(logs, task.program, task.conditioning.scales));
    return true;
  });
  REQUIRE(replayed.size() == r.curve.size());
  for (std::size_t i = 0; i < replayed.size(); ++i) {
    CHECK(replayed[i].success_rate == r.curve[i].report.success_rate);
    CHECK(replayed[i].goal_satisfaction_rate == r.curve[i].report.goal_satisfaction_rate);
  }
}

TEST_CASE("scripted proportional controller solves the tank") {
  auto task = tank_task();
  const auto& p = static_cast<const TankEnv&>(*task.env).params();
  const double hold = p.outflow_rate / p.inflow_rate;
  Controller control = [&](const Eigen::VectorXd& s, StateId) {
    double u = std::clamp(hold + 20.0 * (s(1) - s(0)), 0.0, 1.0);
    return Eigen::VectorXd::Constant(1, u);
  };
  auto report = evaluate(task, control, 100, 7);
  CHECK(report.goal("Level").success_rate == 1.0);
  CHECK(report.goal("Overflow").success_rate == 1.0);
  CHECK(report.success_rate == 1.0);
}

TEST_CASE("small random tilts on an avoid-only plate fail some episodes") {
  auto task = make_task("avoid FallOff: norm(s.x, s.y) in Goal.RangeAbove(0.1125)", std::make_shared<PlateEnv>());
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> tilt(-0.03, 0.03);
  Controller random = [&](const Eigen::VectorXd&, StateId) { return Eigen::Vector2d(tilt(rng), tilt(rng)).eval(); };
  auto report = evaluate(task, random, 100, 11);
  CHECK(report.success_rate > 0.0);
  CHECK(report.success_rate < 1.0);
}

TEST_CASE("evaluation counts interactions and writes step logs") {
  auto task = tank_task();
  Controller idle = [](const Eigen::VectorXd&, StateId) { return Eigen::VectorXd::Constant(1, 1.0 / 3.0); };
  std::ostringstream jsonl;
  std::size_t interactions = 0;
  auto report = evaluate(task, idle, 4, 0, &jsonl, &interactions);
  CHECK(report.episodes == 4);
  CHECK(interactions > 0);
  const std::string lines = jsonl.str();
  CHECK(static_cast<std::size_t>(std::count(lines.begin(), lines.end(), '\n')) == interactions);
  CHECK(kind_of([&] { evaluate(task, idle, 0, 0); }) == ErrorKind::EmptyBatch);
}

TEST_CASE("policy conditions on the automaton state") {
  auto task = make_task("drive D: s.level in Goal.Range(0.4, 0.6) then reach R: s.level in Goal.Range(0.1, 0.2)",
                        std::make_shared<TankEnv>());
  REQUIRE(task.automaton.size() >= 2);
  Policy policy(task.program.schema(), task.automaton.size(), {}, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  Eigen::VectorXd params(static_cast<Eigen::Index>(policy.parameter_count()));
  for (auto& v : params) v = normal(rng);
  policy.set_parameters(params);

  Eigen::Vector2d s(0.5, 0.5);
  CHECK(policy.input(s, 0).tail(task.automaton.size()).sum() == 1.0);
  CHECK(policy.act(s, 0) != policy.act(s, 1));

  Eigen::VectorXd blind = policy.input(s, 1);
  blind.tail(task.automaton.size()).setZero();
  CHECK(policy.forward(blind) != policy.act(s, 1));
  CHECK((policy.act(s, 0).array() >= 0.0).all());
  CHECK((policy.act(s, 0).array() <= 1.0).all());
}

TEST_CASE("policy checkpoints") {
  auto task = tank_task();
  Policy policy(task.program.schema(), task.automaton.size(), {5}, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
  Eigen::VectorXd params = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(policy.parameter_count()), -1, 1);
  policy.set_parameters(params);
  auto back = Policy::from_json(policy.to_json());
  CHECK(back.parameters() == policy.parameters());
  CHECK(back.to_json() == policy.to_json());
  Eigen::Vector2d s(0.3, 0.7);
  CHECK(back.act(s, 1) == policy.act(s, 1));

  CHECK(kind_of([] { Policy::from_json("not json"); }) == ErrorKind::CorruptCheckpoint);
  CHECK(kind_of([] { Policy::from_json("{}"); }) == ErrorKind::CorruptCheckpoint);
  const std::string text = policy.to_json();
  const std::string truncated = text.substr(0, text.size() / 2);
  CHECK(kind_of([&] { Policy::from_json(truncated); }) == ErrorKind::CorruptCheckpoint);
  std::string resized = text;
  resized.replace(resized.find("\"hidden\":[5]"), 12, "\"hidden\":[6]");
  CHECK(kind_of([&] { Policy::from_json(resized); }) == ErrorKind::CorruptCheckpoint);
  CHECK(kind_of([&] { policy.set_parameters(Eigen::VectorXd::Zero(2)); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("make_task checks the schema layout") {
  auto env = std::make_shared<TankEnv>();
  StateSchema swapped({{"setpoint", 0.05, 0.95}, {"level", 0.0, 1.0}});
  CHECK(kind_of([&] { make_task("reach R: s.level in Goal.Range(0, 0.5)", env, swapped); }) ==
        ErrorKind::InvalidConfig);
  StateSchema open({{"level", std::nullopt, std::nullopt}, {"setpoint", 0.05, 0.95}});
  auto task = make_task("reach R: s.level in Goal.Range(0, 0.5)", env, open);
  CHECK(task.conditioning.scales.complete());
}

TEST_CASE("derive_seed separates streams") {
  CHECK(derive_seed(1, 0, 0) == derive_seed(1, 0, 0));
  CHECK(derive_seed(1, 0, 0) != derive_seed(1, 1, 0));
  CHECK(derive_seed(1, 0, 0) != derive_seed(1, 0, 1));
  CHECK(derive_seed(1, 0, 0) != derive_seed(2, 0, 0));
}
