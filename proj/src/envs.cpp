#include "goalforge/envs.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace goalforge {

namespace {

Eigen::VectorXd clamp_action(const Eigen::Ref<const Eigen::VectorXd>& action, const Eigen::VectorXd& low,
                             const Eigen::VectorXd& high, std::string_view env) {
  if (action.size() != low.size()) {
    throw Error(ErrorKind::InvalidConfig, std::string(env) + " expects an action of size " +
                                              std::to_string(low.size()));
  }
  Eigen::VectorXd out = action.cwiseMax(low).cwiseMin(high);
  if (!action.allFinite()) {
    throw Error(ErrorKind::NonFiniteState, std::string(env) + " received a non-finite action");
  }
  if (out != action) spdlog::warn("{}: action out of bounds, clamped", env);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tank
// ---------------------------------------------------------------------------

TankEnv::TankEnv(TankParams params)
    : params_(params),
      schema_(default_schema()),
      low_(Eigen::VectorXd::Zero(1)),
      high_(Eigen::VectorXd::Ones(1)),
      state_(Eigen::Vector2d(0.5, 0.5)) {}

StateSchema TankEnv::default_schema() { return StateSchema({{"level", 0.0, 1.0}, {"setpoint", 0.05, 0.95}}); }

const Eigen::VectorXd& TankEnv::reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> level(0.1, 0.9), setpoint(0.05, 0.95);
  double l = level(rng);
  state_ = Eigen::Vector2d(l, setpoint(rng));
  overflow_ = false;
  return state_;
}

const Eigen::VectorXd& TankEnv::step(const Eigen::Ref<const Eigen::VectorXd>& action) {
  Eigen::VectorXd u = clamp_action(action, low_, high_, name());
  double level = state_(0) + params_.dt * (params_.inflow_rate * u(0) - params_.outflow_rate);
  if (level >= 1.0) overflow_ = true;
  state_(0) = std::clamp(level, 0.0, 1.0);
  return state_;
}

void TankEnv::set_state(double level, double setpoint) {
  state_ = Eigen::Vector2d(level, setpoint);
  overflow_ = level >= 1.0;
}

// ---------------------------------------------------------------------------
// Plate
// ---------------------------------------------------------------------------

PlateEnv::PlateEnv(PlateParams params)
    : params_(params),
      schema_(default_schema()),
      low_(Eigen::VectorXd::Constant(2, -params.max_tilt)),
      high_(Eigen::VectorXd::Constant(2, params.max_tilt)),
      state_(Eigen::Vector4d::Zero()) {}

StateSchema PlateEnv::default_schema() {
  return StateSchema({{"x", -0.1125, 0.1125}, {"y", -0.1125, 0.1125}, {"vx", -0.5, 0.5}, {"vy", -0.5, 0.5}});
}

const Eigen::VectorXd& PlateEnv::reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0), speed(-params_.start_speed, params_.start_speed);
  // Uniform over the disk: radius ~ sqrt(U).
  double r = params_.start_fraction * params_.radius * std::sqrt(unit(rng));
  double theta = 2.0 * std::numbers::pi * unit(rng);
  double vx = speed(rng);
  double vy = speed(rng);
  state_ = Eigen::Vector4d(r * std::cos(theta), r * std::sin(theta), vx, vy);
  fell_off_ = false;
  return state_;
}

const Eigen::VectorXd& PlateEnv::step(const Eigen::Ref<const Eigen::VectorXd>& action) {
  Eigen::VectorXd tilt = clamp_action(action, low_, high_, name());
  Eigen::Vector2d pos = state_.head<2>();
  Eigen::Vector2d vel = state_.tail<2>();
  Eigen::Vector2d acc = params_.gravity * tilt - params_.friction * vel;
  pos += params_.dt * vel;
  vel += params_.dt * acc;
  state_ << pos, vel;
  if (pos.norm() > params_.radius) fell_off_ = true;
  return state_;
}

void PlateEnv::set_state(const Eigen::Vector4d& state) {
  state_ = state;
  fell_off_ = state.head<2>().norm() > params_.radius;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Environment> make_environment(std::string_view name) {
  if (name == "tank") return std::make_unique<TankEnv>();
  if (name == "plate") return std::make_unique<PlateEnv>();
  throw Error(ErrorKind::InvalidConfig, "unknown environment '" + std::string(name) + "' (expected tank or plate)");
}

ScaleTable estimate_scales(const Environment& prototype, std::size_t episodes, std::size_t steps,
                           std::uint64_t seed) {
  if (episodes == 0) throw Error(ErrorKind::InvalidConfig, "scale estimation needs at least one episode");
  auto env = prototype.clone();
  std::mt19937_64 rng(seed);
  std::vector<Eigen::VectorXd> samples;
  const auto& low = env->action_low();
  const auto& high = env->action_high();
  for (std::size_t e = 0; e < episodes; ++e) {
    samples.push_back(env->reset(rng()));
    for (std::size_t t = 0; t < steps && !env->failed(); ++t) {
      Eigen::VectorXd a(low.size());
      for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = std::uniform_real_distribution<double>(low(i), high(i))(rng);
      samples.push_back(env->step(a));
    }
  }
  return scales_from_samples(env->schema(), samples);
}

}  // namespace goalforge
