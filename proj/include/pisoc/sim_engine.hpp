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

#ifndef PISOC_SIM_ENGINE_HPP
#define PISOC_SIM_ENGINE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "pisoc/cost_models.hpp"
#include "pisoc/costs.hpp"
#include "pisoc/dynamics.hpp"
#include "pisoc/ilqg.hpp"
#include "pisoc/mouse.hpp"
#include "pisoc/pi_controller.hpp"
#include "pisoc/random.hpp"
#include "pisoc/scenario.hpp"
#include "pisoc/types.hpp"

/**
 * \file
 * \brief Closed-loop episodes: plant with wind and a velocity-tracking layer, the mouse, collision
 * monitoring and the metrics extracted from the resulting logs.
 */

namespace pisoc {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct LowLevelModel {
  double tau_v = 0.0;  ///< first-order tracking time constant [s]; 0 reaches the command in one step
  double u_max = 5.0;  ///< acceleration saturation [m/s^2]
};

struct DisturbanceState {
  Vec2 wind = Vec2::Zero();
};

struct PlantStepResult {
  JointState state;
  DisturbanceState disturbance;
  Eigen::VectorXd applied;  ///< saturated accelerations, 2 per agent
};

/// Advances the Ornstein-Uhlenbeck wind by dt with the exact transition (Brownian when theta is 0).
inline DisturbanceState advance_disturbance(const DisturbanceState& w, const DisturbanceModel& model, double dt,
                                            NormalStream& rng) {
  DisturbanceState out = w;
  if (model.ou_theta > 0.0) {
    const double decay = std::exp(-model.ou_theta * dt);
    out.wind = model.wind_mean + (w.wind - model.wind_mean) * decay;
    if (model.ou_sigma > 0.0) {
      const double sd = model.ou_sigma * std::sqrt((1.0 - decay * decay) / (2.0 * model.ou_theta));
      out.wind += sd * Vec2(rng(), rng());
    }
  } else if (model.ou_sigma > 0.0) {
    out.wind += model.ou_sigma * std::sqrt(dt) * Vec2(rng(), rng());
  }
  return out;
}

/// One plant step: tracking acceleration, wind, process noise and position update.
/**
 * a_i = (v_cmd_i - v_i) / max(tau_v, dt), clipped to norm u_max. Velocities receive a_i dt, a process
 * noise increment of variance sigma_u^2 dt per axis and the change of the wind over the step; positions
 * move with the velocity held at the start of the step. Throws ContractViolation naming `step_index` if
 * the result is not finite.
 */
inline PlantStepResult plant_step(const JointState& x, std::span<const Vec2> v_cmd, const LowLevelModel& low_level,
                                  const DisturbanceModel& disturbance, const DisturbanceState& w, double sigma_u,
                                  double dt, NormalStream& rng, std::size_t step_index = 0) {
  if (!(dt > 0.0)) {
    throw ContractViolation("plant_step: dt must be positive");
  }
  const std::size_t m = x.num_agents();
  if (v_cmd.size() != m) {
    throw ContractViolation("plant_step: one velocity command per agent required");
  }
  PlantStepResult out;
  out.disturbance = advance_disturbance(w, disturbance, dt, rng);
  const Vec2 gust = out.disturbance.wind - w.wind;
  const double gain = 1.0 / std::max(low_level.tau_v, dt);
  const double noise_sd = sigma_u * std::sqrt(dt);
  out.state = x;
  out.applied.resize(2 * static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    const Vec2 v = x.velocity(i);
    Vec2 a = (v_cmd[i] - v) * gain;
    const double norm = a.norm();
    if (norm > low_level.u_max) {
      a *= low_level.u_max / norm;
    }
    const Vec2 xi = noise_sd > 0.0 ? Vec2(noise_sd * rng(), noise_sd * rng()) : Vec2::Zero();
    out.state.position(i) = x.position(i) + v * dt;
    out.state.velocity(i) = v + a * dt + xi + gust;
    out.applied.segment<2>(2 * static_cast<Eigen::Index>(i)) = a;
  }
  if (!out.state.all_finite() || !out.disturbance.wind.allFinite()) {
    throw ContractViolation("plant_step: non-finite state at step " + std::to_string(step_index));
  }
  return out;
}

// ---------------------------------------------------------------------------------------------------
// Logs.

struct StepRecord {
  double t = 0.0;
  JointState state;
  std::vector<Vec2> command;  ///< velocity targets in force over the following plant step
  Eigen::VectorXd applied;    ///< accelerations applied over the following plant step
  double ess = kNaN;          ///< of the latest replan; NaN for iLQG
  double cost = 0.0;          ///< running state cost rate at `state`
  std::optional<MouseState> mouse;
  std::string event;
};

struct FormationSummary {
  double radial_error = kNaN;
  double gap_cv = kNaN;
  double mean_speed = kNaN;
  double rotation_consistency = kNaN;  ///< fraction of samples turning with the majority
  int rotation_direction = 0;          ///< +1 counter-clockwise, -1 clockwise
  bool agents_agree = false;           ///< every agent's mean angular rate has the majority sign
  std::size_t samples = 0;
};

struct EpisodeSummary {
  std::string scenario;
  std::string controller;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  double duration = 0.0;
  bool crashed = false;
  double crash_time = kNaN;
  bool aborted = false;
  std::string abort_reason;
  double total_cost = 0.0;      ///< integral of the running state cost
  double control_effort = 0.0;  ///< integral of 1/2 ‖a‖^2 of the applied accelerations
  double mean_ess = kNaN;
  double min_ess = kNaN;
  std::size_t replans = 0;
  std::size_t failed_replans = 0;
  std::string route = "none";
  double final_target_distance = kNaN;
  bool captured = false;
  double capture_time = kNaN;
  double final_mouse_distance = kNaN;  ///< nearest-cat distance averaged over the final window
  FormationSummary formation;
};

struct EpisodeLog {
  std::vector<StepRecord> records;
  EpisodeSummary summary;
};

// ---------------------------------------------------------------------------------------------------
// Metrics.

namespace detail {

inline double nearest_cat_distance(const JointState& x, const Vec2& mouse) {
  double best = kInfinity;
  for (std::size_t i = 0; i < x.num_agents(); ++i) {
    best = std::min(best, (x.position(i) - mouse).norm());
  }
  return best;
}

}  // namespace detail

/// Formation statistics over records with t >= max(t_end - window_s, start_time).
/**
 * Radial error is the mean of |‖p_i - c‖ - d|, the gap CV is the population coefficient of variation of
 * the angular gaps between neighbours around c, averaged over samples, and the angular rate of agent i
 * is (r x v) / ‖r‖^2 with r and v taken relative to c. The centre c is the origin, or the mouse when
 * `about_mouse` is set. Requires at least two agents.
 */
inline FormationSummary formation_metrics(const EpisodeLog& log, const HoldingPatternParams& params,
                                          double window_s = 20.0, bool about_mouse = false,
                                          double start_time = -kInfinity) {
  FormationSummary out;
  if (log.records.empty()) {
    return out;
  }
  const std::size_t m = log.records.front().state.num_agents();
  if (m < 2) {
    throw ContractViolation("formation_metrics: at least two agents required");
  }
  const double from = std::max(log.records.back().t - window_s, start_time);
  double radial = 0.0;
  double cv = 0.0;
  double speed = 0.0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::vector<double> agent_rate(m, 0.0);
  std::vector<double> angles(m);
  for (const auto& rec : log.records) {
    if (rec.t < from - 1e-9) {
      continue;
    }
    Vec2 centre = Vec2::Zero();
    Vec2 centre_v = Vec2::Zero();
    if (about_mouse && rec.mouse) {
      centre = rec.mouse->p;
      centre_v = rec.mouse->v;
    }
    for (std::size_t i = 0; i < m; ++i) {
      const Vec2 r = rec.state.position(i) - centre;
      const Vec2 v = rec.state.velocity(i) - centre_v;
      radial += std::abs(r.norm() - params.d);
      speed += rec.state.velocity(i).norm();
      angles[i] = std::atan2(r.y(), r.x());
      const double sq = r.squaredNorm();
      const double rate = sq > 0.0 ? (r.x() * v.y() - r.y() * v.x()) / sq : 0.0;
      agent_rate[i] += rate;
      positive += rate > 0.0 ? 1 : 0;
      negative += rate < 0.0 ? 1 : 0;
    }
    std::sort(angles.begin(), angles.end());
    double sum = 0.0;
    double sq_sum = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double gap = k + 1 < m ? angles[k + 1] - angles[k] : angles[0] + 2.0 * M_PI - angles[k];
      sum += gap;
      sq_sum += gap * gap;
    }
    const double mean_gap = sum / static_cast<double>(m);
    const double var = std::max(0.0, sq_sum / static_cast<double>(m) - mean_gap * mean_gap);
    cv += std::sqrt(var) / mean_gap;
    ++out.samples;
  }
  if (out.samples == 0) {
    return out;
  }
  const double n = static_cast<double>(out.samples);
  out.radial_error = radial / (n * static_cast<double>(m));
  out.mean_speed = speed / (n * static_cast<double>(m));
  out.gap_cv = cv / n;
  out.rotation_direction = positive >= negative ? 1 : -1;
  out.rotation_consistency = static_cast<double>(std::max(positive, negative)) / (n * static_cast<double>(m));
  out.agents_agree = std::all_of(agent_rate.begin(), agent_rate.end(),
                                 [&](double rate) { return rate * out.rotation_direction > 0.0; });
  return out;
}

/// Mean logged running cost over the records with t in (t_end - window_s, t_end].
inline double trailing_mean_cost(const EpisodeLog& log, double t_end, double window_s) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& rec : log.records) {
    if (rec.t > t_end - window_s + 1e-9 && rec.t <= t_end + 1e-9) {
      sum += rec.cost;
      ++count;
    }
  }
  return count == 0 ? kNaN : sum / static_cast<double>(count);
}

// ---------------------------------------------------------------------------------------------------
// Episodes.

inline constexpr std::uint64_t kPlantStream = 0x9a17u;
inline constexpr std::uint64_t kPlannerStream = 0x71a4u;

namespace detail {

inline bool inside(const Box& box, const Vec2& p) {
  return p.x() >= box.lo.x() && p.x() <= box.hi.x() && p.y() >= box.lo.y() && p.y() <= box.hi.y();
}

template <class Cost>
typename Cost::Context make_context(const std::optional<MouseState>& mouse) {
  if constexpr (std::is_same_v<typename Cost::Context, CatMouseCost::Context>) {
    return CatMouseCost::Context{mouse ? mouse->p : Vec2::Zero()};
  } else {
    return typename Cost::Context{};
  }
}

template <class Cost>
double state_cost(const Cost& cost, const JointState& x, const std::optional<MouseState>& mouse) {
  return cost.running(x, make_context<Cost>(mouse));
}

/// Closed loop with the planner cost `plan` (used by the controller) and `score` (logged).
template <class PlanCost, class ScoreCost>
EpisodeLog simulate(const ScenarioConfig& cfg, ControllerKind controller, std::uint64_t seed, const PlanCost& plan,
                    const ScoreCost& score) {
  EpisodeLog log;
  EpisodeSummary& sum = log.summary;
  sum.scenario = to_string(cfg.kind);
  sum.controller = to_string(controller);
  sum.seed = seed;

  const double dt = cfg.plant_dt();
  const std::size_t n_steps = steps_for(cfg.duration_s, dt);
  const double period = cfg.pi.replan_period();
  const std::size_t m = cfg.agents;
  const LowLevelModel low_level{cfg.plant.tau_v, cfg.plant.u_max};
  const ObstacleSet obstacles = cfg.obstacle_set();
  const bool cat_mouse = cfg.kind == ScenarioKind::kCatMouse;

  JointState x = initial_state(cfg, seed);
  DisturbanceState wind;
  NormalStream plant_rng(derive_seed(seed, {kPlantStream}));
  std::optional<MouseState> mouse;
  if (cat_mouse) {
    mouse = MouseState{cfg.mouse.position, Vec2::Zero()};
    mouse->v = mouse_policy(mouse->p, x, cfg.cost.v_max_mouse, cfg.mouse.escape);
  }

  std::vector<Vec2> command(m);
  for (std::size_t i = 0; i < m; ++i) {
    command[i] = x.velocity(i);
  }
  Eigen::VectorXd applied = Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(m));
  ControlSequence warm(cfg.pi.steps(), m);
  const IlqgConfig ilqg_cfg = cfg.ilqg_solver();
  std::optional<IlqgSolution> plan_ilqg;
  double plan_start = 0.0;
  double ess_sum = 0.0;
  double ess = kNaN;
  double next_replan = 0.0;
  std::size_t replan_index = 0;
  bool stop = false;

  auto finish_record = [&](double t, std::string event) {
    StepRecord rec;
    rec.t = t;
    rec.state = x;
    rec.command = command;
    rec.applied = applied;
    rec.ess = ess;
    rec.cost = state_cost(score, x, mouse);
    rec.mouse = mouse;
    rec.event = std::move(event);
    log.records.push_back(std::move(rec));
  };

  auto check_events = [&](double t, std::string& event) {
    if (obstacle_violation(x, obstacles)) {
      sum.crashed = true;
      sum.crash_time = t;
      event = "crash";
      stop = true;
    }
    if (cat_mouse && !sum.captured) {
      const double nearest = nearest_cat_distance(x, mouse->p);
      if (nearest <= cfg.mouse.capture_radius || cat_on_mouse(mouse->p, x)) {
        sum.captured = true;
        sum.capture_time = t;
        event = event.empty() ? "capture" : event + ";capture";
        stop = stop || cfg.mouse.terminate_on_capture;
      }
    }
    if (sum.route == "none") {
      for (std::size_t i = 0; i < m; ++i) {
        const Vec2 p = x.position(i);
        if (cfg.route.gap && inside(*cfg.route.gap, p)) {
          sum.route = "gap";
        } else if (cfg.route.around && inside(*cfg.route.around, p)) {
          sum.route = "around";
        }
      }
    }
  };

  std::string event;
  check_events(0.0, event);
  std::size_t n = 0;
  for (; n < n_steps && !stop; ++n) {
    const double t = static_cast<double>(n) * dt;
    if (t >= next_replan - 1e-9) {
      const typename PlanCost::Context ctx = make_context<PlanCost>(mouse);
      try {
        if (controller == ControllerKind::kPi) {
          try {
            const auto res =
                mpc_step(x, warm, cfg.pi, plan, derive_seed(seed, {kPlannerStream, replan_index}), ctx);
            command = res.v_next;
            warm = res.warm;
            ess = res.diagnostics.ess;
            ess_sum += ess;
            sum.min_ess = std::isnan(sum.min_ess) ? ess : std::min(sum.min_ess, ess);
          } catch (const NoFeasibleSample&) {
            for (std::size_t i = 0; i < m; ++i) {
              command[i] = x.velocity(i);
            }
            warm = shift_warm_start(warm, std::min(cfg.pi.replan_shift(), warm.steps()));
            ess = kNaN;
            ++sum.failed_replans;
            event = event.empty() ? "no_feasible_sample" : event + ";no_feasible_sample";
          }
        } else {
          if (!plan_ilqg || cfg.ilqg.resolve) {
            std::optional<ControlSequence> init;
            if (plan_ilqg) {
              const std::size_t used = steps_for(t - plan_start, ilqg_cfg.dt_s);
              init = shift_warm_start(plan_ilqg->nominal_controls, std::min(used, ilqg_cfg.steps()));
            }
            plan_ilqg = ilqg_solve(x, plan, ilqg_cfg, ctx, init);
            plan_start = t;
          }
          const std::size_t idx = steps_for(t - plan_start, ilqg_cfg.dt_s);
          const bool feedback = cfg.ilqg.execution == IlqgExecution::kFeedback;
          for (std::size_t i = 0; i < m; ++i) {
            Vec2 u = Vec2::Zero();
            if (idx < ilqg_cfg.steps()) {
              u = plan_ilqg->control(idx, x, feedback).segment<2>(2 * static_cast<Eigen::Index>(i));
            }
            command[i] = propagate_velocity_command(x.velocity(i), u, period);
          }
        }
      } catch (const std::exception& e) {
        sum.aborted = true;
        sum.abort_reason = e.what();
        event = event.empty() ? "abort" : event + ";abort";
        finish_record(t, event);
        break;
      }
      ++sum.replans;
      next_replan += period;
      ++replan_index;
    }

    try {
      const auto next = plant_step(x, command, low_level, cfg.disturbance, wind, cfg.plant_sigma(), dt, plant_rng, n);
      applied = next.applied;
      finish_record(t, event);
      sum.total_cost += log.records.back().cost * dt;
      sum.control_effort += 0.5 * applied.squaredNorm() * dt;
      x = next.state;
      wind = next.disturbance;
    } catch (const std::exception& e) {
      sum.aborted = true;
      sum.abort_reason = e.what();
      finish_record(t, event.empty() ? "abort" : event + ";abort");
      break;
    }
    if (mouse) {
      mouse->v = mouse_policy(mouse->p, log.records.back().state, cfg.cost.v_max_mouse, cfg.mouse.escape);
      mouse->p += mouse->v * dt;
    }
    event.clear();
    check_events(static_cast<double>(n + 1) * dt, event);
  }
  sum.steps = n;
  sum.duration = static_cast<double>(n) * dt;
  if (!sum.aborted) {
    applied.setZero();
    finish_record(sum.duration, event.empty() ? "end" : event + ";end");
  }
  if (sum.replans > sum.failed_replans && controller == ControllerKind::kPi) {
    sum.mean_ess = ess_sum / static_cast<double>(sum.replans - sum.failed_replans);
  }

  if (cfg.kind == ScenarioKind::kDrunken) {
    double far = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      far = std::max(far, (x.position(i) - cfg.cost.target).norm());
    }
    sum.final_target_distance = far;
  }
  if (cat_mouse) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& rec : log.records) {
      if (rec.t >= sum.duration - cfg.metrics.final_window_s - 1e-9) {
        total += nearest_cat_distance(rec.state, rec.mouse->p);
        ++count;
      }
    }
    sum.final_mouse_distance = count == 0 ? kNaN : total / static_cast<double>(count);
  }
  const bool formation = (cfg.kind == ScenarioKind::kHoldingPattern || cat_mouse) && m >= 2;
  if (formation) {
    const double start = cat_mouse && sum.captured ? sum.capture_time : -kInfinity;
    sum.formation = formation_metrics(log, cfg.hp_params(), cfg.metrics.window_s, cat_mouse, start);
  }
  return log;
}

}  // namespace detail

/// Runs one closed-loop episode. Controller failures end the episode early with `aborted` set.
inline EpisodeLog run_episode(const ScenarioConfig& cfg, ControllerKind controller, std::uint64_t seed) {
  cfg.validate();
  const AnyCost plan = make_cost(cfg, controller);
  const AnyCost score = make_cost(cfg, ControllerKind::kPi);
  return std::visit(
      [&](const auto& p) {
        using Plan = std::decay_t<decltype(p)>;
        return detail::simulate(cfg, controller, seed, p, std::get<Plan>(score));
      },
      plan);
}

// ---------------------------------------------------------------------------------------------------
// Serialization.

/// Shortest text that reads back to the same double ("%.17g"); nan and inf spelled out.
inline std::string format_double(double value) {
  if (std::isnan(value)) {
    return "nan";
  }
  if (std::isinf(value)) {
    return value > 0 ? "inf" : "-inf";
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

/// One row per agent per record; the mouse appears as agent -1 with its velocity in the command columns.
inline void write_episode_csv(std::ostream& out, const EpisodeLog& log) {
  out << "t,agent,p_E,p_N,v_E,v_N,cmd_vE,cmd_vN,ess,cost,event\n";
  for (const auto& rec : log.records) {
    const std::string t = format_double(rec.t);
    const std::string ess = format_double(rec.ess);
    const std::string cost = format_double(rec.cost);
    for (std::size_t i = 0; i < rec.state.num_agents(); ++i) {
      const Vec2 p = rec.state.position(i);
      const Vec2 v = rec.state.velocity(i);
      const Vec2& c = rec.command[i];
      out << t << ',' << i << ',' << format_double(p.x()) << ',' << format_double(p.y()) << ','
          << format_double(v.x()) << ',' << format_double(v.y()) << ',' << format_double(c.x()) << ','
          << format_double(c.y()) << ',' << ess << ',' << cost << ',' << rec.event << '\n';
    }
    if (rec.mouse) {
      const auto& mo = *rec.mouse;
      out << t << ",-1," << format_double(mo.p.x()) << ',' << format_double(mo.p.y()) << ','
          << format_double(mo.v.x()) << ',' << format_double(mo.v.y()) << ',' << format_double(mo.v.x()) << ','
          << format_double(mo.v.y()) << ',' << ess << ',' << cost << ',' << rec.event << '\n';
    }
  }
}

inline void write_summary(std::ostream& out, const EpisodeSummary& s) {
  auto kv = [&](const char* key, const std::string& value) { out << key << '=' << value << '\n'; };
  auto num = [&](const char* key, double value) { kv(key, format_double(value)); };
  kv("scenario", s.scenario);
  kv("controller", s.controller);
  kv("seed", std::to_string(s.seed));
  kv("steps", std::to_string(s.steps));
  num("duration", s.duration);
  kv("crashed", s.crashed ? "1" : "0");
  num("crash_time", s.crash_time);
  kv("aborted", s.aborted ? "1" : "0");
  kv("abort_reason", s.abort_reason);
  num("total_cost", s.total_cost);
  num("control_effort", s.control_effort);
  num("mean_ess", s.mean_ess);
  num("min_ess", s.min_ess);
  kv("replans", std::to_string(s.replans));
  kv("failed_replans", std::to_string(s.failed_replans));
  kv("route", s.route);
  num("final_target_distance", s.final_target_distance);
  kv("captured", s.captured ? "1" : "0");
  num("capture_time", s.capture_time);
  num("final_mouse_distance", s.final_mouse_distance);
  num("radial_error", s.formation.radial_error);
  num("gap_cv", s.formation.gap_cv);
  num("mean_speed", s.formation.mean_speed);
  num("rotation_consistency", s.formation.rotation_consistency);
  kv("rotation_direction", std::to_string(s.formation.rotation_direction));
  kv("agents_agree", s.formation.agents_agree ? "1" : "0");
}

}  // namespace pisoc

#endif
