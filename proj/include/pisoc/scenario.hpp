// Copyright 2026 The pisoc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef PISOC_SCENARIO_HPP
#define PISOC_SCENARIO_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "pisoc/cost_models.hpp"
#include "pisoc/costs.hpp"
#include "pisoc/ilqg.hpp"
#include "pisoc/pi_controller.hpp"
#include "pisoc/random.hpp"
#include "pisoc/types.hpp"

/**
 * \file
 * \brief Declarative experiment description and the cost models / initial states derived from it.
 */

namespace pisoc {

/// Invalid configuration. `field` is a dotted path such as "cost.v_min"; `line` is 1-based or 0 if unknown.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message, std::size_t line = 0)
      : std::runtime_error(format(field, message, line)), field_(std::move(field)), line_(line) {}

  [[nodiscard]] const std::string& field() const { return field_; }
  [[nodiscard]] std::size_t line() const { return line_; }

 private:
  static std::string format(const std::string& field, const std::string& message, std::size_t line) {
    std::string out;
    if (line > 0) {
      out += "line " + std::to_string(line) + ": ";
    }
    if (!field.empty()) {
      out += field + ": ";
    }
    return out + message;
  }

  std::string field_;
  std::size_t line_;
};

enum class ScenarioKind { kDrunken, kHoldingPattern, kCatMouse, kLqOracle };
enum class ControllerKind { kPi, kIlqg };
enum class IlqgExecution { kFeedback, kOpenLoop };

inline std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kDrunken:
      return "drunken";
    case ScenarioKind::kHoldingPattern:
      return "holding_pattern";
    case ScenarioKind::kCatMouse:
      return "cat_mouse";
    case ScenarioKind::kLqOracle:
      return "lq_oracle";
  }
  return "unknown";
}

inline std::string to_string(ControllerKind kind) { return kind == ControllerKind::kPi ? "pi" : "ilqg"; }

struct InitialConditions {
  std::vector<AgentState> states;  ///< explicit states; random placement when empty
  Box random_box{Vec2(-3.0, -3.0), Vec2(3.0, 3.0)};
  double min_separation = 1.5;
  double random_speed = 0.0;

  bool operator==(const InitialConditions&) const = default;
};

struct MouseConfig {
  Vec2 position = Vec2::Zero();
  bool escape = true;  ///< flee along sum (p_mouse - p_i); false uses the opposite sign
  bool predict = true; ///< planner rollouts move the mouse with its policy
  double capture_radius = 1.0;
  bool terminate_on_capture = true;

  bool operator==(const MouseConfig&) const = default;
};

/// First-order velocity tracking, acceleration saturation and the plant's own process noise.
struct PlantConfig {
  double dt_s = 0.0;                  ///< 0 means "same as pi.dt_s"
  std::optional<double> sigma_u;      ///< unset means "same as pi.sigma_u"
  double tau_v = 0.0;
  double u_max = 5.0;

  bool operator==(const PlantConfig&) const = default;
};

/// Ornstein-Uhlenbeck wind acting on every agent's velocity.
struct DisturbanceModel {
  Vec2 wind_mean = Vec2::Zero();
  double ou_theta = 0.0;  ///< mean reversion [1/s]
  double ou_sigma = 0.0;  ///< intensity [m/s per sqrt(s)]

  bool operator==(const DisturbanceModel&) const = default;

  [[nodiscard]] bool active() const { return ou_sigma > 0.0 || wind_mean.squaredNorm() > 0.0; }
};

struct IlqgSettings {
  IlqgConfig solver;
  double penalty_scale = 0.3;
  double penalty_weight = 1.0;
  IlqgExecution execution = IlqgExecution::kFeedback;
  bool resolve = false;

  bool operator==(const IlqgSettings& o) const {
    const auto& a = solver;
    const auto& b = o.solver;
    return a.max_iters == b.max_iters && a.step_size == b.step_size && a.horizon_s == b.horizon_s &&
           a.convergence_tol == b.convergence_tol && a.control_weight == b.control_weight && a.mode == b.mode &&
           penalty_scale == o.penalty_scale && penalty_weight == o.penalty_weight && execution == o.execution &&
           resolve == o.resolve;
  }
};

struct CostConfig {
  double v_min = 1.0;
  double v_max = 3.0;
  double d = 7.0;
  double c_hit = 20.0;
  std::optional<ArenaShape> arena;  ///< default: ring for holding pattern, disc for cat and mouse
  double v_max_mouse = 3.0;
  double agent_radius = 0.5;
  std::vector<Box> obstacles;
  Vec2 target = Vec2::Zero();
  double target_weight = 1.0;
  double terminal_weight = 1.0;
  double huber_width = 1.0;
  double q_pos = 1.0;
  double q_vel = 1.0;
  double qf_pos = 1.0;
  double qf_vel = 1.0;

  bool operator==(const CostConfig&) const = default;
};

/// Regions used to classify which way a vehicle went (first region entered wins).
struct RouteConfig {
  std::optional<Box> gap;
  std::optional<Box> around;

  bool operator==(const RouteConfig&) const = default;
};

struct MetricsConfig {
  double window_s = 20.0;       ///< formation statistics over the final window
  double final_window_s = 5.0;  ///< mouse distance averaged over this final window

  bool operator==(const MetricsConfig&) const = default;
};

/// One parameter point of a sweep: dotted key -> YAML scalar/flow text.
using SweepPoint = std::vector<std::pair<std::string, std::string>>;

inline bool pi_config_equal(const PiConfig& a, const PiConfig& b) {
  return a.n_samples == b.n_samples && a.horizon_s == b.horizon_s && a.dt_s == b.dt_s && a.lambda == b.lambda &&
         a.sigma_u == b.sigma_u && a.replan_hz == b.replan_hz && a.importance_correction == b.importance_correction &&
         a.workers == b.workers;
}

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::kHoldingPattern;
  std::size_t agents = 1;
  double duration_s = 10.0;
  std::vector<std::uint64_t> seeds{0};
  std::vector<ControllerKind> controllers{ControllerKind::kPi};
  InitialConditions initial;
  MouseConfig mouse;
  PlantConfig plant;
  DisturbanceModel disturbance;
  PiConfig pi;
  IlqgSettings ilqg;
  CostConfig cost;
  RouteConfig route;
  MetricsConfig metrics;
  std::vector<SweepPoint> sweep;

  bool operator==(const ScenarioConfig& o) const {
    return kind == o.kind && agents == o.agents && duration_s == o.duration_s && seeds == o.seeds &&
           controllers == o.controllers && initial == o.initial && mouse == o.mouse && plant == o.plant &&
           disturbance == o.disturbance && pi_config_equal(pi, o.pi) && ilqg == o.ilqg && cost == o.cost &&
           route == o.route && metrics == o.metrics && sweep == o.sweep;
  }

  [[nodiscard]] double plant_dt() const { return plant.dt_s > 0.0 ? plant.dt_s : pi.dt_s; }
  [[nodiscard]] double plant_sigma() const { return plant.sigma_u.value_or(pi.sigma_u); }

  [[nodiscard]] ArenaShape arena() const {
    return cost.arena.value_or(kind == ScenarioKind::kCatMouse ? ArenaShape::kDisc : ArenaShape::kRing);
  }

  [[nodiscard]] HoldingPatternParams hp_params() const {
    return HoldingPatternParams{cost.v_min, cost.v_max, cost.d, cost.c_hit, arena()};
  }

  [[nodiscard]] IlqgConfig ilqg_solver() const {
    IlqgConfig out = ilqg.solver;
    out.dt_s = pi.dt_s;
    return out;
  }

  /// Checks every block against its module invariants; throws ConfigError naming the field.
  void validate() const {
    auto check = [](bool ok, const char* field, const std::string& message) {
      if (!ok) {
        throw ConfigError(field, message);
      }
    };
    auto rethrow = [](const char* block, auto&& fn) {
      try {
        fn();
      } catch (const ContractViolation& e) {
        throw ConfigError(block, e.what());
      }
    };
    check(agents >= 1, "agents", "at least one agent required");
    check(duration_s > 0.0 && std::isfinite(duration_s), "duration_s", "must be positive");
    check(!seeds.empty(), "seeds", "at least one seed required");
    check(!controllers.empty(), "controllers", "at least one controller required");
    if (!initial.states.empty()) {
      check(initial.states.size() == agents, "initial.states", "needs exactly one entry per agent");
    } else {
      check(initial.random_box.hi.x() > initial.random_box.lo.x() && initial.random_box.hi.y() > initial.random_box.lo.y(),
            "initial.random_box", "needs lo < hi on both axes");
      check(initial.min_separation >= 0.0, "initial.min_separation", "must be non-negative");
      check(initial.random_speed >= 0.0, "initial.random_speed", "must be non-negative");
    }
    check(mouse.capture_radius >= 0.0, "mouse.capture_radius", "must be non-negative");
    check(plant.dt_s >= 0.0, "plant.dt_s", "must be non-negative");
    check(!plant.sigma_u || *plant.sigma_u >= 0.0, "plant.sigma_u", "must be non-negative");
    check(plant.tau_v >= 0.0, "plant.tau_v", "must be non-negative");
    check(plant.u_max > 0.0, "plant.u_max", "must be positive");
    check(disturbance.ou_theta >= 0.0, "disturbance.ou_theta", "must be non-negative");
    check(disturbance.ou_sigma >= 0.0, "disturbance.ou_sigma", "must be non-negative");
    rethrow("pi", [&] { pi.validate(); });
    check(plant_dt() <= pi.replan_period() + 1e-12, "plant.dt_s", "must not exceed the replan period");
    rethrow("ilqg", [&] { ilqg_solver().validate(); });
    check(ilqg.penalty_scale > 0.0, "ilqg.penalty_scale", "must be positive");
    check(ilqg.penalty_weight >= 0.0, "ilqg.penalty_weight", "must be non-negative");
    if (!(cost.v_min < cost.v_max)) {
      throw ConfigError("cost.v_min", "cost.v_min must be below cost.v_max");
    }
    check(cost.d > 0.0, "cost.d", "must be positive");
    check(cost.c_hit >= 0.0, "cost.c_hit", "must be non-negative");
    check(cost.v_max_mouse > 0.0, "cost.v_max_mouse", "must be positive");
    rethrow("cost.obstacles", [&] { ObstacleSet{cost.obstacles, cost.agent_radius}.validate(); });
    check(cost.huber_width > 0.0, "cost.huber_width", "must be positive");
    check(metrics.window_s > 0.0, "metrics.window_s", "must be positive");
    check(metrics.final_window_s > 0.0, "metrics.final_window_s", "must be positive");
  }

  [[nodiscard]] ObstacleSet obstacle_set() const { return ObstacleSet{cost.obstacles, cost.agent_radius}; }
};

using AnyCost = std::variant<TargetCost, HoldingPatternCost, CatMouseCost, QuadraticCost>;

/// Cost model for a scenario. iLQG gets the smooth obstacle penalty instead of hard constraints.
inline AnyCost make_cost(const ScenarioConfig& cfg, ControllerKind controller) {
  switch (cfg.kind) {
    case ScenarioKind::kDrunken: {
      TargetCost cost;
      cost.obstacles = cfg.obstacle_set();
      cost.target = cfg.cost.target;
      cost.target_weight = cfg.cost.target_weight;
      cost.terminal_weight = cfg.cost.terminal_weight;
      cost.huber_width = cfg.cost.huber_width;
      cost.hard = controller == ControllerKind::kPi;
      cost.penalty_scale = cfg.ilqg.penalty_scale;
      cost.penalty_weight = cfg.ilqg.penalty_weight;
      return cost;
    }
    case ScenarioKind::kHoldingPattern:
      return HoldingPatternCost{cfg.hp_params(), cfg.cost.agent_radius};
    case ScenarioKind::kCatMouse: {
      CatMouseCost cost;
      cost.params = CatMouseParams{cfg.hp_params(), cfg.cost.v_max_mouse};
      cost.agent_radius = cfg.cost.agent_radius;
      cost.predict_mouse = cfg.mouse.predict;
      cost.mouse_escapes = cfg.mouse.escape;
      return cost;
    }
    case ScenarioKind::kLqOracle:
      return QuadraticCost::diagonal(cfg.agents, cfg.cost.q_pos, cfg.cost.q_vel, cfg.cost.qf_pos, cfg.cost.qf_vel);
  }
  throw ConfigError("scenario", "unknown scenario kind");
}

/// Initial joint state: the explicit list, or uniform placement in random_box with rejection on
/// min_separation and velocities of random_speed in a random direction.
inline JointState initial_state(const ScenarioConfig& cfg, std::uint64_t seed) {
  if (!cfg.initial.states.empty()) {
    return JointState(std::span<const AgentState>(cfg.initial.states));
  }
  NormalStream rng(derive_seed(seed, {0x1417u}));
  const Box& box = cfg.initial.random_box;
  std::vector<AgentState> agents;
  constexpr int kMaxTries = 100000;
  for (int tries = 0; agents.size() < cfg.agents; ++tries) {
    if (tries > kMaxTries) {
      throw ConfigError("initial.min_separation", "cannot place agents with the requested separation");
    }
    const Vec2 p(rng.uniform(box.lo.x(), box.hi.x()), rng.uniform(box.lo.y(), box.hi.y()));
    bool clear = true;
    for (const auto& other : agents) {
      clear = clear && (other.p - p).norm() >= cfg.initial.min_separation;
    }
    if (!clear) {
      continue;
    }
    const double heading = rng.uniform(-M_PI, M_PI);
    agents.push_back(AgentState{p, cfg.initial.random_speed * Vec2(std::cos(heading), std::sin(heading))});
  }
  return JointState(std::span<const AgentState>(agents));
}

}  // namespace pisoc

#endif
