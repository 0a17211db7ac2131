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

#ifndef PISOC_CONFIG_IO_HPP
#define PISOC_CONFIG_IO_HPP

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "pisoc/scenario.hpp"

/**
 * \file
 * \brief YAML scenario files: strict loading with line-numbered errors, and lossless serialization.
 *
 * Unknown keys are rejected. Every block is optional and falls back to the defaults of the
 * corresponding C++ struct; only `scenario` is required.
 */

namespace pisoc {

namespace yaml_detail {

inline std::size_t line_of(const YAML::Node& node) {
  const auto mark = node.Mark();
  return mark.line < 0 ? 0 : static_cast<std::size_t>(mark.line) + 1;
}

inline std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

inline void expect_map(const YAML::Node& node, const std::string& field) {
  if (!node.IsMap()) {
    throw ConfigError(field, "expected a mapping", line_of(node));
  }
}

inline void check_keys(const YAML::Node& node, const std::string& prefix, std::initializer_list<std::string_view> keys) {
  expect_map(node, prefix.empty() ? "<root>" : prefix);
  for (const auto& entry : node) {
    const auto key = entry.first.as<std::string>();
    bool known = false;
    for (const auto allowed : keys) {
      known = known || key == allowed;
    }
    if (!known) {
      throw ConfigError(join(prefix, key), "unknown key", line_of(entry.first));
    }
  }
}

template <class T>
T scalar(const YAML::Node& node, const std::string& field) {
  if (!node.IsScalar()) {
    throw ConfigError(field, "expected a scalar", line_of(node));
  }
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(field, "cannot parse '" + node.Scalar() + "'", line_of(node));
  }
}

template <class T>
void read(const YAML::Node& parent, const std::string& prefix, const char* key, T& out) {
  if (const YAML::Node node = parent[key]) {
    out = scalar<T>(node, join(prefix, key));
  }
}

inline Vec2 vec2(const YAML::Node& node, const std::string& field) {
  if (!node.IsSequence() || node.size() != 2) {
    throw ConfigError(field, "expected a list of two numbers", line_of(node));
  }
  return Vec2(scalar<double>(node[0], field), scalar<double>(node[1], field));
}

inline void read_vec2(const YAML::Node& parent, const std::string& prefix, const char* key, Vec2& out) {
  if (const YAML::Node node = parent[key]) {
    out = vec2(node, join(prefix, key));
  }
}

inline Box box(const YAML::Node& node, const std::string& field) {
  check_keys(node, field, {"lo", "hi"});
  if (!node["lo"] || !node["hi"]) {
    throw ConfigError(field, "box needs both lo and hi", line_of(node));
  }
  return Box{vec2(node["lo"], field + ".lo"), vec2(node["hi"], field + ".hi")};
}

template <class Enum>
Enum choice(const YAML::Node& node, const std::string& field,
            std::initializer_list<std::pair<std::string_view, Enum>> options) {
  const auto text = scalar<std::string>(node, field);
  std::string allowed;
  for (const auto& [name, value] : options) {
    if (text == name) {
      return value;
    }
    allowed += (allowed.empty() ? "" : ", ") + std::string(name);
  }
  throw ConfigError(field, "'" + text + "' is not one of " + allowed, line_of(node));
}

inline const std::initializer_list<std::pair<std::string_view, ScenarioKind>> kScenarioNames = {
    {"drunken", ScenarioKind::kDrunken},
    {"holding_pattern", ScenarioKind::kHoldingPattern},
    {"cat_mouse", ScenarioKind::kCatMouse},
    {"lq_oracle", ScenarioKind::kLqOracle}};

inline const std::initializer_list<std::pair<std::string_view, ControllerKind>> kControllerNames = {
    {"pi", ControllerKind::kPi}, {"ilqg", ControllerKind::kIlqg}};

inline const std::initializer_list<std::pair<std::string_view, IlqgStepMode>> kModeNames = {
    {"constant", IlqgStepMode::kConstant}, {"backtracking", IlqgStepMode::kBacktracking}};

inline const std::initializer_list<std::pair<std::string_view, IlqgExecution>> kExecutionNames = {
    {"feedback", IlqgExecution::kFeedback}, {"open_loop", IlqgExecution::kOpenLoop}};

inline const std::initializer_list<std::pair<std::string_view, ArenaShape>> kArenaNames = {
    {"ring", ArenaShape::kRing}, {"disc", ArenaShape::kDisc}};

template <class Enum>
std::string name_of(Enum value, std::initializer_list<std::pair<std::string_view, Enum>> options) {
  for (const auto& [name, v] : options) {
    if (v == value) {
      return std::string(name);
    }
  }
  return "unknown";
}

/// Shortest decimal text that parses back to the same double.
inline std::string number(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

inline YAML::Node vec_node(const Vec2& v) {
  YAML::Node node(YAML::NodeType::Sequence);
  node.SetStyle(YAML::EmitterStyle::Flow);
  node.push_back(number(v.x()));
  node.push_back(number(v.y()));
  return node;
}

inline YAML::Node box_node(const Box& b) {
  YAML::Node node;
  node.SetStyle(YAML::EmitterStyle::Flow);
  node["lo"] = vec_node(b.lo);
  node["hi"] = vec_node(b.hi);
  return node;
}

inline void parse_initial(const YAML::Node& node, InitialConditions& out) {
  const std::string p = "initial";
  check_keys(node, p, {"states", "random_box", "min_separation", "random_speed"});
  if (const YAML::Node states = node["states"]) {
    if (!states.IsSequence()) {
      throw ConfigError(p + ".states", "expected a list of [p_E, p_N, v_E, v_N]", line_of(states));
    }
    out.states.clear();
    for (std::size_t i = 0; i < states.size(); ++i) {
      const YAML::Node s = states[i];
      const std::string field = p + ".states[" + std::to_string(i) + "]";
      if (!s.IsSequence() || s.size() != 4) {
        throw ConfigError(field, "expected [p_E, p_N, v_E, v_N]", line_of(s));
      }
      out.states.push_back(AgentState{Vec2(scalar<double>(s[0], field), scalar<double>(s[1], field)),
                                      Vec2(scalar<double>(s[2], field), scalar<double>(s[3], field))});
    }
  }
  if (const YAML::Node b = node["random_box"]) {
    out.random_box = box(b, p + ".random_box");
  }
  read(node, p, "min_separation", out.min_separation);
  read(node, p, "random_speed", out.random_speed);
}

inline void parse_pi(const YAML::Node& node, PiConfig& out) {
  const std::string p = "pi";
  check_keys(node, p,
             {"n_samples", "horizon_s", "dt_s", "lambda", "sigma_u", "replan_hz", "importance_correction", "workers"});
  read(node, p, "n_samples", out.n_samples);
  read(node, p, "horizon_s", out.horizon_s);
  read(node, p, "dt_s", out.dt_s);
  read(node, p, "lambda", out.lambda);
  read(node, p, "sigma_u", out.sigma_u);
  read(node, p, "replan_hz", out.replan_hz);
  read(node, p, "importance_correction", out.importance_correction);
  read(node, p, "workers", out.workers);
}

inline void parse_ilqg(const YAML::Node& node, IlqgSettings& out) {
  const std::string p = "ilqg";
  check_keys(node, p,
             {"max_iters", "step_size", "horizon_s", "convergence_tol", "control_weight", "mode", "penalty_scale",
              "penalty_weight", "execution", "resolve"});
  read(node, p, "max_iters", out.solver.max_iters);
  read(node, p, "step_size", out.solver.step_size);
  read(node, p, "horizon_s", out.solver.horizon_s);
  read(node, p, "convergence_tol", out.solver.convergence_tol);
  read(node, p, "control_weight", out.solver.control_weight);
  if (const YAML::Node mode = node["mode"]) {
    out.solver.mode = choice(mode, p + ".mode", kModeNames);
  }
  read(node, p, "penalty_scale", out.penalty_scale);
  read(node, p, "penalty_weight", out.penalty_weight);
  if (const YAML::Node exec = node["execution"]) {
    out.execution = choice(exec, p + ".execution", kExecutionNames);
  }
  read(node, p, "resolve", out.resolve);
}

inline void parse_cost(const YAML::Node& node, CostConfig& out) {
  const std::string p = "cost";
  check_keys(node, p,
             {"v_min", "v_max", "d", "c_hit", "arena", "v_max_mouse", "agent_radius", "obstacles", "target",
              "target_weight", "terminal_weight", "huber_width", "q_pos", "q_vel", "qf_pos", "qf_vel"});
  read(node, p, "v_min", out.v_min);
  read(node, p, "v_max", out.v_max);
  read(node, p, "d", out.d);
  read(node, p, "c_hit", out.c_hit);
  if (const YAML::Node arena = node["arena"]) {
    out.arena = choice(arena, p + ".arena", kArenaNames);
  }
  read(node, p, "v_max_mouse", out.v_max_mouse);
  read(node, p, "agent_radius", out.agent_radius);
  if (const YAML::Node obstacles = node["obstacles"]) {
    if (!obstacles.IsSequence()) {
      throw ConfigError(p + ".obstacles", "expected a list of boxes", line_of(obstacles));
    }
    out.obstacles.clear();
    for (std::size_t i = 0; i < obstacles.size(); ++i) {
      out.obstacles.push_back(box(obstacles[i], p + ".obstacles[" + std::to_string(i) + "]"));
    }
  }
  read_vec2(node, p, "target", out.target);
  read(node, p, "target_weight", out.target_weight);
  read(node, p, "terminal_weight", out.terminal_weight);
  read(node, p, "huber_width", out.huber_width);
  read(node, p, "q_pos", out.q_pos);
  read(node, p, "q_vel", out.q_vel);
  read(node, p, "qf_pos", out.qf_pos);
  read(node, p, "qf_vel", out.qf_vel);
}

inline void parse_sweep(const YAML::Node& node, std::vector<SweepPoint>& out) {
  if (!node.IsSequence()) {
    throw ConfigError("sweep", "expected a list of override mappings", line_of(node));
  }
  out.clear();
  for (std::size_t i = 0; i < node.size(); ++i) {
    const YAML::Node point = node[i];
    const std::string field = "sweep[" + std::to_string(i) + "]";
    expect_map(point, field);
    SweepPoint parsed;
    for (const auto& entry : point) {
      const auto key = entry.first.as<std::string>();
      if (key == "sweep" || key.empty()) {
        throw ConfigError(field + "." + key, "cannot be overridden", line_of(entry.first));
      }
      YAML::Emitter em;
      em.SetMapFormat(YAML::Flow);
      em.SetSeqFormat(YAML::Flow);
      em << entry.second;
      parsed.emplace_back(key, em.c_str());
    }
    out.push_back(std::move(parsed));
  }
}

}  // namespace yaml_detail

/// Builds a config from a parsed YAML document. Does not run ScenarioConfig::validate.
inline ScenarioConfig config_from_yaml(const YAML::Node& root) {
  using namespace yaml_detail;
  check_keys(root, "",
             {"scenario", "agents", "duration_s", "seeds", "controllers", "initial", "mouse", "plant", "disturbance",
              "pi", "ilqg", "cost", "route", "metrics", "sweep"});
  ScenarioConfig cfg;
  if (!root["scenario"]) {
    throw ConfigError("scenario", "required key missing", line_of(root));
  }
  cfg.kind = choice(root["scenario"], "scenario", kScenarioNames);
  read(root, "", "agents", cfg.agents);
  read(root, "", "duration_s", cfg.duration_s);
  if (const YAML::Node seeds = root["seeds"]) {
    if (!seeds.IsSequence()) {
      throw ConfigError("seeds", "expected a list of integers", line_of(seeds));
    }
    cfg.seeds.clear();
    for (const auto& s : seeds) {
      cfg.seeds.push_back(scalar<std::uint64_t>(s, "seeds"));
    }
  }
  if (const YAML::Node controllers = root["controllers"]) {
    if (!controllers.IsSequence()) {
      throw ConfigError("controllers", "expected a list", line_of(controllers));
    }
    cfg.controllers.clear();
    for (const auto& c : controllers) {
      cfg.controllers.push_back(choice(c, "controllers", kControllerNames));
    }
  }
  if (const YAML::Node node = root["initial"]) {
    parse_initial(node, cfg.initial);
  }
  if (const YAML::Node node = root["mouse"]) {
    check_keys(node, "mouse", {"position", "escape", "predict", "capture_radius", "terminate_on_capture"});
    read_vec2(node, "mouse", "position", cfg.mouse.position);
    read(node, "mouse", "escape", cfg.mouse.escape);
    read(node, "mouse", "predict", cfg.mouse.predict);
    read(node, "mouse", "capture_radius", cfg.mouse.capture_radius);
    read(node, "mouse", "terminate_on_capture", cfg.mouse.terminate_on_capture);
  }
  if (const YAML::Node node = root["plant"]) {
    check_keys(node, "plant", {"dt_s", "sigma_u", "tau_v", "u_max"});
    read(node, "plant", "dt_s", cfg.plant.dt_s);
    if (node["sigma_u"]) {
      cfg.plant.sigma_u = scalar<double>(node["sigma_u"], "plant.sigma_u");
    }
    read(node, "plant", "tau_v", cfg.plant.tau_v);
    read(node, "plant", "u_max", cfg.plant.u_max);
  }
  if (const YAML::Node node = root["disturbance"]) {
    check_keys(node, "disturbance", {"wind_mean", "ou_theta", "ou_sigma"});
    read_vec2(node, "disturbance", "wind_mean", cfg.disturbance.wind_mean);
    read(node, "disturbance", "ou_theta", cfg.disturbance.ou_theta);
    read(node, "disturbance", "ou_sigma", cfg.disturbance.ou_sigma);
  }
  if (const YAML::Node node = root["pi"]) {
    parse_pi(node, cfg.pi);
  }
  if (const YAML::Node node = root["ilqg"]) {
    parse_ilqg(node, cfg.ilqg);
  }
  if (const YAML::Node node = root["cost"]) {
    parse_cost(node, cfg.cost);
  }
  if (const YAML::Node node = root["route"]) {
    check_keys(node, "route", {"gap", "around"});
    if (node["gap"]) {
      cfg.route.gap = box(node["gap"], "route.gap");
    }
    if (node["around"]) {
      cfg.route.around = box(node["around"], "route.around");
    }
  }
  if (const YAML::Node node = root["metrics"]) {
    check_keys(node, "metrics", {"window_s", "final_window_s"});
    read(node, "metrics", "window_s", cfg.metrics.window_s);
    read(node, "metrics", "final_window_s", cfg.metrics.final_window_s);
  }
  if (const YAML::Node node = root["sweep"]) {
    parse_sweep(node, cfg.sweep);
  }
  return cfg;
}

/// Full YAML form of a config with every field spelled out.
inline YAML::Node config_to_yaml(const ScenarioConfig& cfg) {
  using namespace yaml_detail;
  YAML::Node root;
  root["scenario"] = to_string(cfg.kind);
  root["agents"] = cfg.agents;
  root["duration_s"] = number(cfg.duration_s);
  YAML::Node seeds(YAML::NodeType::Sequence);
  seeds.SetStyle(YAML::EmitterStyle::Flow);
  for (const auto s : cfg.seeds) {
    seeds.push_back(s);
  }
  root["seeds"] = seeds;
  YAML::Node controllers(YAML::NodeType::Sequence);
  controllers.SetStyle(YAML::EmitterStyle::Flow);
  for (const auto c : cfg.controllers) {
    controllers.push_back(to_string(c));
  }
  root["controllers"] = controllers;

  YAML::Node initial;
  if (!cfg.initial.states.empty()) {
    YAML::Node states(YAML::NodeType::Sequence);
    for (const auto& s : cfg.initial.states) {
      YAML::Node row(YAML::NodeType::Sequence);
      row.SetStyle(YAML::EmitterStyle::Flow);
      for (const double v : {s.p.x(), s.p.y(), s.v.x(), s.v.y()}) {
        row.push_back(number(v));
      }
      states.push_back(row);
    }
    initial["states"] = states;
  }
  initial["random_box"] = box_node(cfg.initial.random_box);
  initial["min_separation"] = number(cfg.initial.min_separation);
  initial["random_speed"] = number(cfg.initial.random_speed);
  root["initial"] = initial;

  YAML::Node mouse;
  mouse["position"] = vec_node(cfg.mouse.position);
  mouse["escape"] = cfg.mouse.escape;
  mouse["predict"] = cfg.mouse.predict;
  mouse["capture_radius"] = number(cfg.mouse.capture_radius);
  mouse["terminate_on_capture"] = cfg.mouse.terminate_on_capture;
  root["mouse"] = mouse;

  YAML::Node plant;
  plant["dt_s"] = number(cfg.plant.dt_s);
  if (cfg.plant.sigma_u) {
    plant["sigma_u"] = number(*cfg.plant.sigma_u);
  }
  plant["tau_v"] = number(cfg.plant.tau_v);
  plant["u_max"] = number(cfg.plant.u_max);
  root["plant"] = plant;

  YAML::Node dist;
  dist["wind_mean"] = vec_node(cfg.disturbance.wind_mean);
  dist["ou_theta"] = number(cfg.disturbance.ou_theta);
  dist["ou_sigma"] = number(cfg.disturbance.ou_sigma);
  root["disturbance"] = dist;

  YAML::Node pi;
  pi["n_samples"] = cfg.pi.n_samples;
  pi["horizon_s"] = number(cfg.pi.horizon_s);
  pi["dt_s"] = number(cfg.pi.dt_s);
  pi["lambda"] = number(cfg.pi.lambda);
  pi["sigma_u"] = number(cfg.pi.sigma_u);
  pi["replan_hz"] = number(cfg.pi.replan_hz);
  pi["importance_correction"] = cfg.pi.importance_correction;
  pi["workers"] = cfg.pi.workers;
  root["pi"] = pi;

  YAML::Node ilqg;
  ilqg["max_iters"] = cfg.ilqg.solver.max_iters;
  ilqg["step_size"] = number(cfg.ilqg.solver.step_size);
  ilqg["horizon_s"] = number(cfg.ilqg.solver.horizon_s);
  ilqg["convergence_tol"] = number(cfg.ilqg.solver.convergence_tol);
  ilqg["control_weight"] = number(cfg.ilqg.solver.control_weight);
  ilqg["mode"] = name_of(cfg.ilqg.solver.mode, kModeNames);
  ilqg["penalty_scale"] = number(cfg.ilqg.penalty_scale);
  ilqg["penalty_weight"] = number(cfg.ilqg.penalty_weight);
  ilqg["execution"] = name_of(cfg.ilqg.execution, kExecutionNames);
  ilqg["resolve"] = cfg.ilqg.resolve;
  root["ilqg"] = ilqg;

  YAML::Node cost;
  cost["v_min"] = number(cfg.cost.v_min);
  cost["v_max"] = number(cfg.cost.v_max);
  cost["d"] = number(cfg.cost.d);
  cost["c_hit"] = number(cfg.cost.c_hit);
  if (cfg.cost.arena) {
    cost["arena"] = name_of(*cfg.cost.arena, kArenaNames);
  }
  cost["v_max_mouse"] = number(cfg.cost.v_max_mouse);
  cost["agent_radius"] = number(cfg.cost.agent_radius);
  YAML::Node obstacles(YAML::NodeType::Sequence);
  for (const auto& b : cfg.cost.obstacles) {
    obstacles.push_back(box_node(b));
  }
  cost["obstacles"] = obstacles;
  cost["target"] = vec_node(cfg.cost.target);
  cost["target_weight"] = number(cfg.cost.target_weight);
  cost["terminal_weight"] = number(cfg.cost.terminal_weight);
  cost["huber_width"] = number(cfg.cost.huber_width);
  cost["q_pos"] = number(cfg.cost.q_pos);
  cost["q_vel"] = number(cfg.cost.q_vel);
  cost["qf_pos"] = number(cfg.cost.qf_pos);
  cost["qf_vel"] = number(cfg.cost.qf_vel);
  root["cost"] = cost;

  if (cfg.route.gap || cfg.route.around) {
    YAML::Node route;
    if (cfg.route.gap) {
      route["gap"] = box_node(*cfg.route.gap);
    }
    if (cfg.route.around) {
      route["around"] = box_node(*cfg.route.around);
    }
    root["route"] = route;
  }

  YAML::Node metrics;
  metrics["window_s"] = number(cfg.metrics.window_s);
  metrics["final_window_s"] = number(cfg.metrics.final_window_s);
  root["metrics"] = metrics;

  if (!cfg.sweep.empty()) {
    YAML::Node sweep(YAML::NodeType::Sequence);
    for (const auto& point : cfg.sweep) {
      YAML::Node entry;
      entry.SetStyle(YAML::EmitterStyle::Flow);
      for (const auto& [key, value] : point) {
        entry[key] = YAML::Load(value);
      }
      sweep.push_back(entry);
    }
    root["sweep"] = sweep;
  }
  return root;
}

inline std::string serialize_config(const ScenarioConfig& cfg) {
  YAML::Emitter em;
  em << config_to_yaml(cfg);
  return std::string(em.c_str()) + "\n";
}

/// The base config with one sweep point's overrides applied (and the sweep list removed), validated.
inline ScenarioConfig apply_sweep_point(const ScenarioConfig& base, const SweepPoint& point) {
  YAML::Node root = config_to_yaml(base);
  root.remove("sweep");
  for (const auto& [key, value] : point) {
    std::vector<std::string> path;
    std::stringstream ss(key);
    for (std::string part; std::getline(ss, part, '.');) {
      path.push_back(part);
    }
    // Walk with fresh handles; yaml-cpp node assignment would otherwise alias rather than descend.
    std::vector<YAML::Node> chain{root};
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      YAML::Node child = chain.back()[path[i]];
      if (!child.IsDefined() || child.IsNull()) {
        child = YAML::Node(YAML::NodeType::Map);
        chain.back()[path[i]] = child;
      }
      chain.push_back(chain.back()[path[i]]);
    }
    chain.back()[path.back()] = YAML::Load(value);
  }
  ScenarioConfig out = config_from_yaml(root);
  try {
    out.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(e.field(), std::string("in sweep point: ") + e.what());
  }
  return out;
}

/// Parses and validates YAML text, sweep points included. Errors carry the line number when one is available.
inline ScenarioConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("", e.msg, e.mark.line < 0 ? 0 : static_cast<std::size_t>(e.mark.line) + 1);
  }
  if (!root || root.IsNull()) {
    throw ConfigError("scenario", "empty configuration");
  }
  ScenarioConfig cfg = config_from_yaml(root);
  cfg.validate();
  for (const auto& point : cfg.sweep) {
    (void)apply_sweep_point(cfg, point);
  }
  return cfg;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("", "cannot read " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline ScenarioConfig load_scenario(const std::string& path) { return parse_config(read_text_file(path)); }

/// "key=value;key=value" label of a sweep point; empty for the base config.
inline std::string point_label(const SweepPoint& point) {
  std::string out;
  for (const auto& [key, value] : point) {
    out += (out.empty() ? "" : ";") + key + "=" + value;
  }
  return out;
}

}  // namespace pisoc

#endif
