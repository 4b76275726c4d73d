#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>

#include "goalforge/goal_lang.hpp"
#include "goalforge/reward.hpp"

namespace goalforge {

/// Seedable single-owner simulator with a box action space.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string_view name() const = 0;
  virtual const StateSchema& schema() const = 0;
  virtual const Eigen::VectorXd& action_low() const = 0;
  virtual const Eigen::VectorXd& action_high() const = 0;
  Eigen::Index action_dim() const { return action_low().size(); }

  /// Draws an initial state; identical seeds give identical states.
  virtual const Eigen::VectorXd& reset(std::uint64_t seed) = 0;
  /// One integration step. Out-of-bounds actions are clamped.
  virtual const Eigen::VectorXd& step(const Eigen::Ref<const Eigen::VectorXd>& action) = 0;
  virtual const Eigen::VectorXd& state() const = 0;
  /// Overflow for the tank, fall-off for the plate.
  virtual bool failed() const = 0;

  virtual std::unique_ptr<Environment> clone() const = 0;
};

// ---------------------------------------------------------------------------
// Tank: state (level, setpoint), action inflow valve opening in [0, 1].
// ---------------------------------------------------------------------------

struct TankParams {
  double inflow_rate = 1.5;   // level fraction per second at full opening
  double outflow_rate = 0.5;  // level fraction per second
  double dt = 0.045;
};

class TankEnv final : public Environment {
 public:
  explicit TankEnv(TankParams params = {});

  std::string_view name() const override { return "tank"; }
  const StateSchema& schema() const override { return schema_; }
  const Eigen::VectorXd& action_low() const override { return low_; }
  const Eigen::VectorXd& action_high() const override { return high_; }
  const Eigen::VectorXd& reset(std::uint64_t seed) override;
  const Eigen::VectorXd& step(const Eigen::Ref<const Eigen::VectorXd>& action) override;
  const Eigen::VectorXd& state() const override { return state_; }
  bool failed() const override { return overflow_; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<TankEnv>(*this); }

  const TankParams& params() const noexcept { return params_; }
  /// Places the tank at a given level and setpoint (tests and scripted runs).
  void set_state(double level, double setpoint);

  static StateSchema default_schema();

 private:
  TankParams params_;
  StateSchema schema_;
  Eigen::VectorXd low_, high_, state_;
  bool overflow_ = false;
};

// ---------------------------------------------------------------------------
// Plate: state (x, y, vx, vy), action tilt (pitch, roll) in [-0.2, 0.2] rad.
// ---------------------------------------------------------------------------

struct PlateParams {
  double gravity = 9.81;
  double friction = 0.8;  // 1/s, linear drag
  double max_tilt = 0.2;
  double radius = 0.1125;
  double dt = 0.045;
  double start_fraction = 0.6;  // initial positions inside this fraction of the radius
  double start_speed = 0.02;    // initial velocity components in [-v, v]
};

class PlateEnv final : public Environment {
 public:
  explicit PlateEnv(PlateParams params = {});

  std::string_view name() const override { return "plate"; }
  const StateSchema& schema() const override { return schema_; }
  const Eigen::VectorXd& action_low() const override { return low_; }
  const Eigen::VectorXd& action_high() const override { return high_; }
  const Eigen::VectorXd& reset(std::uint64_t seed) override;
  const Eigen::VectorXd& step(const Eigen::Ref<const Eigen::VectorXd>& action) override;
  const Eigen::VectorXd& state() const override { return state_; }
  bool failed() const override { return fell_off_; }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<PlateEnv>(*this); }

  const PlateParams& params() const noexcept { return params_; }
  void set_state(const Eigen::Vector4d& state);

  static StateSchema default_schema();

 private:
  PlateParams params_;
  StateSchema schema_;
  Eigen::VectorXd low_, high_, state_;
  bool fell_off_ = false;
};

/// "tank" or "plate"; throws InvalidConfig otherwise.
std::unique_ptr<Environment> make_environment(std::string_view name);

/// Scale table from random-action rollouts; declared schema bounds win.
ScaleTable estimate_scales(const Environment& prototype, std::size_t episodes, std::size_t steps,
                           std::uint64_t seed);

}  // namespace goalforge
