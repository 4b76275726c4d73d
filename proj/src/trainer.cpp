#include "goalforge/trainer.hpp"

#include <Eigen/Cholesky>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

namespace goalforge {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ stream) ^ index);
}

Task make_task(std::string goal_text, std::shared_ptr<const Environment> env, const StateSchema& schema,
               std::size_t max_episode_steps, std::uint64_t seed) {
  const auto& native = env->schema();
  bool same_layout = native.size() == schema.size();
  for (std::size_t i = 0; same_layout && i < schema.size(); ++i) {
    same_layout = native.field(i).name == schema.field(i).name;
  }
  if (!same_layout) {
    throw Error(ErrorKind::InvalidConfig,
                "schema fields do not match the " + std::string(env->name()) + " state layout");
  }
  auto program = parse_program(goal_text, schema);
  auto automaton = build(program);
  ConditioningConfig cond;
  cond.max_episode_steps = max_episode_steps;
  cond.scales = ScaleTable(schema);
  if (!cond.scales.complete()) {
    auto sampled = estimate_scales(*env, 20, max_episode_steps, seed);
    for (std::size_t i = 0; i < schema.size(); ++i) {
      if (!cond.scales.range(i)) cond.scales.set(i, *sampled.range(i));
    }
  }
  cond.validate();
  return Task{std::move(goal_text), std::move(program), std::move(automaton), std::move(cond), std::move(env)};
}

// ---------------------------------------------------------------------------
// Policy
// ---------------------------------------------------------------------------

Policy::Policy(const StateSchema& schema, std::size_t automaton_states, std::vector<std::size_t> hidden,
               Eigen::VectorXd action_low, Eigen::VectorXd action_high)
    : hidden_(std::move(hidden)),
      automaton_states_(automaton_states),
      state_lo_(schema.size()),
      state_hi_(schema.size()),
      action_low_(std::move(action_low)),
      action_high_(std::move(action_high)) {
  for (std::size_t i = 0; i < schema.size(); ++i) {
    const auto& f = schema.field(i);
    if (!f.min || !f.max || !(*f.max > *f.min)) {
      throw Error(ErrorKind::InvalidConfig, "policy input '" + f.name + "' needs declared bounds");
    }
    state_lo_(static_cast<Eigen::Index>(i)) = *f.min;
    state_hi_(static_cast<Eigen::Index>(i)) = *f.max;
  }
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count()));
}

std::size_t Policy::parameter_count() const noexcept {
  std::size_t n = 0, width = input_dim();
  for (auto h : hidden_) {
    n += (width + 1) * h;
    width = h;
  }
  return n + (width + 1) * output_dim();
}

void Policy::set_parameters(const Eigen::Ref<const Eigen::VectorXd>& params) {
  if (static_cast<std::size_t>(params.size()) != parameter_count()) {
    throw Error(ErrorKind::InvalidConfig, "policy expects " + std::to_string(parameter_count()) + " parameters");
  }
  params_ = params;
}

Eigen::VectorXd Policy::input(const Eigen::Ref<const Eigen::VectorXd>& state, StateId automaton_state) const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(input_dim()));
  const auto n = state_lo_.size();
  x.head(n) = (2.0 * (state - state_lo_).array() / (state_hi_ - state_lo_).array() - 1.0).matrix();
  if (automaton_state < automaton_states_) x(n + static_cast<Eigen::Index>(automaton_state)) = 1.0;
  return x;
}

Eigen::VectorXd Policy::forward(const Eigen::Ref<const Eigen::VectorXd>& input) const {
  Eigen::VectorXd x = input;
  Eigen::Index offset = 0;
  auto layer = [&](std::size_t out) {
    const auto in = x.size();
    const auto rows = static_cast<Eigen::Index>(out);
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + offset, rows, in);
    offset += rows * in;
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + offset, rows);
    offset += rows;
    x = ((w * x + b).array().tanh()).matrix();
  };
  for (auto h : hidden_) layer(h);
  layer(output_dim());
  return action_low_ + ((x.array() + 1.0) * 0.5 * (action_high_ - action_low_).array()).matrix();
}

Eigen::VectorXd Policy::act(const Eigen::Ref<const Eigen::VectorXd>& state, StateId automaton_state) const {
  return forward(input(state, automaton_state));
}

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd json_vec(const nlohmann::json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string Policy::to_json() const {
  nlohmann::json j = {{"hidden", hidden_},
                      {"automaton_states", automaton_states_},
                      {"state_low", vec_json(state_lo_)},
                      {"state_high", vec_json(state_hi_)},
                      {"action_low", vec_json(action_low_)},
                      {"action_high", vec_json(action_high_)},
                      {"parameters", vec_json(params_)}};
  return j.dump();
}

Policy Policy::from_json(std::string_view text) {
  try {
    auto j = nlohmann::json::parse(text);
    Policy p;
    p.hidden_ = j.at("hidden").get<std::vector<std::size_t>>();
    p.automaton_states_ = j.at("automaton_states").get<std::size_t>();
    p.state_lo_ = json_vec(j.at("state_low"));
    p.state_hi_ = json_vec(j.at("state_high"));
    p.action_low_ = json_vec(j.at("action_low"));
    p.action_high_ = json_vec(j.at("action_high"));
    if (p.state_lo_.size() != p.state_hi_.size() || p.action_low_.size() != p.action_high_.size() ||
        p.action_low_.size() == 0) {
      throw Error(ErrorKind::CorruptCheckpoint, "bad policy: inconsistent bound sizes");
    }
    p.set_parameters(json_vec(j.at("parameters")));
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptCheckpoint, std::string("bad policy: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::CorruptCheckpoint) throw;
    throw Error(ErrorKind::CorruptCheckpoint, std::string("bad policy: ") + e.what());
  }
}

Controller as_controller(const Policy& policy) {
  return [policy](const Eigen::VectorXd& s, StateId q) { return policy.act(s, q); };
}

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

EpisodeResult rollout(const Task& task, const Controller& controller, std::uint64_t seed, double gamma, bool record,
                      std::size_t episode_index) {
  auto env = task.env->clone();
  RewardEngine engine(task.automaton, task.conditioning);
  EpisodeResult out;
  out.log.max_steps = task.conditioning.max_episode_steps;
  Eigen::VectorXd state = env->reset(seed);
  double discount = 1.0;
  while (!engine.terminated()) {
    Eigen::VectorXd action = controller(state, engine.automaton_state());
    state = env->step(action);
    auto r = engine.step(state);
    out.undiscounted_return += r.reward;
    out.discounted_return += discount * r.reward;
    discount *= gamma;
    if (record) {
      StepRecord rec;
      rec.episode = episode_index;
      rec.t = out.steps;
      rec.state = state;
      rec.action = action;
      rec.automaton_state = r.automaton_state;
      rec.event = r.event;
      rec.reward = r.reward;
      rec.robustness = goal_robustness(task.program, state);
      out.log.steps.push_back(std::move(rec));
    }
    ++out.steps;
  }
  out.termination = engine.termination();
  return out;
}

AssessmentReport evaluate(const Task& task, const Controller& controller, std::size_t episodes, std::uint64_t seed,
                          std::ostream* jsonl, std::size_t* interactions) {
  if (episodes == 0) throw Error(ErrorKind::EmptyBatch, "evaluation needs at least one episode");
  std::vector<EpisodeLog> logs;
  for (std::size_t e = 0; e < episodes; ++e) {
    auto r = rollout(task, controller, derive_seed(seed, 2, e), 1.0, true, e);
    if (interactions) *interactions += r.steps;
    if (jsonl) {
      for (const auto& rec : r.log.steps) *jsonl << rec.to_json_line() << '\n';
    }
    logs.push_back(std::move(r.log));
  }
  return aggregate(logs, task.program, task.conditioning.scales);
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void TrainerConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidConfig, msg); };
  if (population == 0) fail("population must be positive");
  if (!(elite_fraction > 0.0 && elite_fraction <= 1.0)) fail("elite_fraction must be in (0, 1]");
  if (iterations == 0) fail("iterations must be positive");
  if (episodes_per_candidate == 0) fail("episodes_per_candidate must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) fail("gamma must be in (0, 1)");
  if (workers == 0) fail("workers must be positive");
  if (!(init_sigma > 0.0)) fail("init_sigma must be positive");
  if (!(noise_floor >= 0.0)) fail("noise_floor must be non-negative");
  if (!(extra_noise >= 0.0)) fail("extra_noise must be non-negative");
  if (eval_episodes == 0) fail("eval_episodes must be positive");
  if (max_episode_steps == 0) fail("max_episode_steps must be positive");
}

std::string TrainerConfig::to_json() const {
  nlohmann::json j = {{"population", population},
                      {"elite_fraction", elite_fraction},
                      {"iterations", iterations},
                      {"episodes_per_candidate", episodes_per_candidate},
                      {"gamma", gamma},
                      {"seed", seed},
                      {"workers", workers},
                      {"hidden", hidden},
                      {"init_sigma", init_sigma},
                      {"noise_floor", noise_floor},
                      {"extra_noise", extra_noise},
                      {"full_covariance", full_covariance},
                      {"eval_episodes", eval_episodes},
                      {"max_interactions", max_interactions},
                      {"max_episode_steps", max_episode_steps}};
  return j.dump(2);
}

TrainerConfig TrainerConfig::from_json(std::string_view text) {
  TrainerConfig c;
  try {
    auto j = nlohmann::json::parse(text);
    for (const auto& [key, value] : j.items()) {
      if (key == "population") c.population = value.get<std::size_t>();
      else if (key == "elite_fraction") c.elite_fraction = value.get<double>();
      else if (key == "iterations") c.iterations = value.get<std::size_t>();
      else if (key == "episodes_per_candidate") c.episodes_per_candidate = value.get<std::size_t>();
      else if (key == "gamma") c.gamma = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "workers") c.workers = value.get<std::size_t>();
      else if (key == "hidden") c.hidden = value.get<std::vector<std::size_t>>();
      else if (key == "init_sigma") c.init_sigma = value.get<double>();
      else if (key == "noise_floor") c.noise_floor = value.get<double>();
      else if (key == "extra_noise") c.extra_noise = value.get<double>();
      else if (key == "full_covariance") c.full_covariance = value.get<bool>();
      else if (key == "eval_episodes") c.eval_episodes = value.get<std::size_t>();
      else if (key == "max_interactions") c.max_interactions = value.get<std::size_t>();
      else if (key == "max_episode_steps") c.max_episode_steps = value.get<std::size_t>();
      else throw Error(ErrorKind::InvalidConfig, "unknown trainer option '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("bad trainer config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Cross-entropy method
// ---------------------------------------------------------------------------

namespace {

struct Score {
  double discounted = 0.0;
  std::size_t steps = 0;
};

Score score_candidate(const Task& task, const Policy& policy, const std::vector<std::uint64_t>& seeds, double gamma) {
  Score s;
  auto controller = as_controller(policy);
  for (auto seed : seeds) {
    auto r = rollout(task, controller, seed, gamma);
    s.discounted += r.discounted_return;
    s.steps += r.steps;
  }
  s.discounted /= static_cast<double>(seeds.size());
  return s;
}

// Declared bounds, or the scale table's ranges for undeclared fields.
StateSchema policy_schema(const Task& task) {
  auto fields = task.program.schema().fields();
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (!fields[i].min || !fields[i].max) {
      fields[i].min = task.conditioning.scales.range(i)->lo;
      fields[i].max = task.conditioning.scales.range(i)->hi;
    }
  }
  return StateSchema(std::move(fields));
}

bool better(const CurveRow& a, const CurveRow& b) {
  if (a.report.success_rate != b.report.success_rate) return a.report.success_rate > b.report.success_rate;
  if (a.report.goal_satisfaction_rate != b.report.goal_satisfaction_rate) {
    return a.report.goal_satisfaction_rate > b.report.goal_satisfaction_rate;
  }
  return a.mean_return > b.mean_return;
}

}  // namespace

TrainResult train(const Task& task, const TrainerConfig& config, const IterationCallback& on_iteration) {
  config.validate();
  const auto& env = *task.env;
  Policy policy(policy_schema(task), task.automaton.size(), config.hidden, env.action_low(), env.action_high());
  const auto dim = static_cast<Eigen::Index>(policy.parameter_count());
  const std::size_t elites =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(config.elite_fraction * config.population)));

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  // Sampling factor: candidates are mean + factor * N(0, I).
  Eigen::MatrixXd factor = config.init_sigma * Eigen::MatrixXd::Identity(dim, dim);
  std::mt19937_64 rng(derive_seed(config.seed, 0, 0));
  std::normal_distribution<double> normal(0.0, 1.0);

  TrainResult result;
  std::optional<CurveRow> best_row;
  // Worst-case interactions of one iteration, so a budget is never exceeded.
  const std::size_t per_iteration =
      (config.population * config.episodes_per_candidate + config.eval_episodes) * task.conditioning.max_episode_steps;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    if (config.max_interactions && result.interactions + per_iteration > config.max_interactions) break;
    std::vector<std::uint64_t> seeds(config.episodes_per_candidate);
    for (std::size_t e = 0; e < seeds.size(); ++e) seeds[e] = derive_seed(config.seed, 1, it * 1000003ull + e);

    std::vector<Eigen::VectorXd> candidates(config.population);
    Eigen::VectorXd noise(dim);
    for (auto& c : candidates) {
      for (Eigen::Index i = 0; i < dim; ++i) noise(i) = normal(rng);
      c = mean + factor.triangularView<Eigen::Lower>() * noise;
    }

    std::vector<Score> scores(config.population);
    auto work = [&](std::size_t first, std::size_t stride) {
      Policy local = policy;
      for (std::size_t i = first; i < candidates.size(); i += stride) {
        local.set_parameters(candidates[i]);
        scores[i] = score_candidate(task, local, seeds, config.gamma);
      }
    };
    const std::size_t workers = std::min(config.workers, config.population);
    if (workers <= 1) {
      work(0, 1);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
      for (auto& t : pool) t.join();
    }
    for (const auto& s : scores) result.interactions += s.steps;

    std::vector<std::size_t> order(config.population);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a].discounted > scores[b].discounted; });

    Eigen::VectorXd next_mean = Eigen::VectorXd::Zero(dim);
    for (std::size_t k = 0; k < elites; ++k) next_mean += candidates[order[k]];
    next_mean /= static_cast<double>(elites);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
    for (std::size_t k = 0; k < elites; ++k) {
      Eigen::VectorXd d = candidates[order[k]] - next_mean;
      if (config.full_covariance) cov.noalias() += d * d.transpose();
      else cov.diagonal() += d.array().square().matrix();
    }
    cov /= static_cast<double>(elites);
    double progress = static_cast<double>(it + 1) / static_cast<double>(config.iterations);
    if (config.max_interactions) {
      progress = std::max(progress, static_cast<double>(result.interactions + per_iteration) /
                                        static_cast<double>(config.max_interactions));
    }
    const double extra = config.extra_noise * std::max(0.0, 1.0 - progress);
    cov.diagonal().array() += config.noise_floor * config.noise_floor + extra * extra;
    mean = next_mean;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (!mean.allFinite() || !cov.allFinite() || llt.info() != Eigen::Success) {
      throw Error(ErrorKind::DivergedNaN, "policy parameters became non-finite at iteration " + std::to_string(it));
    }
    factor = llt.matrixL();

    policy.set_parameters(mean);
    CurveRow row;
    row.iteration = it;
    std::vector<EpisodeLog> logs;
    for (std::size_t e = 0; e < config.eval_episodes; ++e) {
      auto r = rollout(task, as_controller(policy), derive_seed(config.seed, 3, e), config.gamma, true, e);
      row.mean_return += r.undiscounted_return;
      row.mean_discounted_return += r.discounted_return;
      result.interactions += r.steps;
      logs.push_back(std::move(r.log));
    }
    row.mean_return /= static_cast<double>(config.eval_episodes);
    row.mean_discounted_return /= static_cast<double>(config.eval_episodes);
    row.report = aggregate(logs, task.program, task.conditioning.scales);
    row.interactions = result.interactions;
    spdlog::info("iteration {:>3}  interactions {:>8}  return {:>9.3f}  success {:.3f}  gsr {:.3f}", it,
                 row.interactions, row.mean_return, row.report.success_rate, row.report.goal_satisfaction_rate);

    if (!best_row || !better(*best_row, row)) {
      best_row = row;
      result.best = policy;
      result.best_iteration = it;
    }
    result.curve.push_back(row);
    bool keep_going = !on_iteration || on_iteration(row, policy);
    if (!keep_going) break;
  }
  result.final = policy;
  return result;
}

std::string curve_csv(const std::vector<CurveRow>& curve, const GoalProgram& program) {
  std::string out = "iteration,interactions,mean_return,mean_discounted_return,success_rate,goal_satisfaction_rate";
  for (const auto& atom : program.atoms()) {
    out += "," + atom.name + "_success_rate," + atom.name + "_gsr";
    if (atom.op == GoalOperator::Minimize || atom.op == GoalOperator::Maximize) out += "," + atom.name + "_distance";
  }
  out += "\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return std::string(buf);
  };
  for (const auto& row : curve) {
    out += std::to_string(row.iteration) + "," + std::to_string(row.interactions) + "," + num(row.mean_return) + "," +
           num(row.mean_discounted_return) + "," + num(row.report.success_rate) + "," +
           num(row.report.goal_satisfaction_rate);
    for (const auto& atom : program.atoms()) {
      const auto& g = row.report.goal(atom.name);
      out += "," + num(g.success_rate) + "," + num(g.mean_gsr);
      if (atom.op == GoalOperator::Minimize || atom.op == GoalOperator::Maximize) {
        auto it = g.mean_extras.find("Distance");
        out += "," + num(it == g.mean_extras.end() ? 0.0 : it->second);
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace goalforge
