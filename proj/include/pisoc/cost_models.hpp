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

#ifndef PISOC_COST_MODELS_HPP
#define PISOC_COST_MODELS_HPP

#include <cmath>
#include <functional>
#include <utility>

#include <Eigen/Core>

#include "pisoc/costs.hpp"
#include "pisoc/mouse.hpp"
#include "pisoc/types.hpp"

/**
 * \file
 * \brief Scenario cost models satisfying CostModel, consumed by the PI sampler and by iLQG.
 */

namespace pisoc {

/// Cost model assembled from plain callables; derivatives are left to finite differences.
struct FunctionCost {
  using Context = NoContext;

  std::function<double(const JointState&)> running_fn = [](const JointState&) { return 0.0; };
  std::function<double(const JointState&)> terminal_fn = [](const JointState&) { return 0.0; };
  std::function<bool(const JointState&)> violation_fn = [](const JointState&) { return false; };

  double running(const JointState& x, const Context&) const { return running_fn(x); }
  double terminal(const JointState& x, const Context&) const { return terminal_fn(x); }
  bool violated(const JointState& x, const Context&) const { return violation_fn(x); }
  Context advance_context(const JointState&, const Context& c, double) const { return c; }
};

/// 1/2 (x - ref)^T Q (x - ref) running rate and 1/2 (x - ref)^T Qf (x - ref) terminal cost.
struct QuadraticCost {
  using Context = NoContext;

  Eigen::MatrixXd q;
  Eigen::MatrixXd qf;
  Eigen::VectorXd reference;

  /// Diagonal weights repeated for every agent.
  static QuadraticCost diagonal(std::size_t agents, double q_pos, double q_vel, double qf_pos, double qf_vel,
                                const Eigen::VectorXd& reference = {}) {
    const auto n = 4 * static_cast<Eigen::Index>(agents);
    Eigen::VectorXd qd(n);
    Eigen::VectorXd qfd(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool pos = (i % 4) < 2;
      qd[i] = pos ? q_pos : q_vel;
      qfd[i] = pos ? qf_pos : qf_vel;
    }
    QuadraticCost out;
    out.q = qd.asDiagonal();
    out.qf = qfd.asDiagonal();
    out.reference = reference.size() == n ? reference : Eigen::VectorXd::Zero(n);
    return out;
  }

  double running(const JointState& x, const Context&) const {
    const Eigen::VectorXd e = x.vector() - reference;
    return 0.5 * e.dot(q * e);
  }
  double terminal(const JointState& x, const Context&) const {
    const Eigen::VectorXd e = x.vector() - reference;
    return 0.5 * e.dot(qf * e);
  }
  bool violated(const JointState&, const Context&) const { return false; }
  Context advance_context(const JointState&, const Context& c, double) const { return c; }

  CostDerivatives running_derivatives(const JointState& x, const Context& c) const {
    const Eigen::VectorXd e = x.vector() - reference;
    return CostDerivatives{running(x, c), q * e, q};
  }
  CostDerivatives terminal_derivatives(const JointState& x, const Context& c) const {
    const Eigen::VectorXd e = x.vector() - reference;
    return CostDerivatives{terminal(x, c), qf * e, qf};
  }
};

/// Holding pattern: formation rate with agent-agent contact as the hard constraint.
struct HoldingPatternCost {
  using Context = NoContext;

  HoldingPatternParams params;
  double agent_radius = 0.5;

  double running(const JointState& x, const Context&) const { return holding_pattern_cost(x, params); }
  double terminal(const JointState&, const Context&) const { return 0.0; }
  bool violated(const JointState& x, const Context&) const {
    return agent_radius > 0.0 && obstacle_violation(x, ObstacleSet{{}, agent_radius});
  }
  Context advance_context(const JointState&, const Context& c, double) const { return c; }

  CostDerivatives running_derivatives(const JointState& x, const Context&) const {
    return holding_pattern_derivatives(x, params);
  }
  CostDerivatives terminal_derivatives(const JointState& x, const Context&) const {
    return CostDerivatives::zero(x.vector().size());
  }
};

/// Cat and mouse: the context is the mouse position, optionally predicted with the mouse policy.
struct CatMouseCost {
  struct Context {
    Vec2 mouse = Vec2::Zero();
    friend bool operator==(const Context& a, const Context& b) { return a.mouse == b.mouse; }
  };

  CatMouseParams params;
  double agent_radius = 0.5;
  bool predict_mouse = true;
  bool mouse_escapes = true;

  double running(const JointState& x, const Context& c) const { return cat_mouse_cost(x, c.mouse, params); }
  double terminal(const JointState&, const Context&) const { return 0.0; }
  bool violated(const JointState& x, const Context&) const {
    return agent_radius > 0.0 && obstacle_violation(x, ObstacleSet{{}, agent_radius});
  }
  Context advance_context(const JointState& x, const Context& c, double dt) const {
    if (!predict_mouse) {
      return c;
    }
    return Context{c.mouse + dt * mouse_policy(c.mouse, x, params.v_max_mouse, mouse_escapes)};
  }

  CostDerivatives running_derivatives(const JointState& x, const Context& c) const {
    return cat_mouse_derivatives(x, c.mouse, params);
  }
  CostDerivatives terminal_derivatives(const JointState& x, const Context&) const {
    return CostDerivatives::zero(x.vector().size());
  }
};

/// Reach a target through an obstacle field.
/**
 * Attraction is a pseudo-Huber distance w (sqrt(‖p - target‖^2 + c^2) - c) per agent. In `hard` mode
 * obstacle contact is a hard constraint (for sampling); otherwise the smooth proximity penalty is added
 * to the running rate and nothing is ever violated (for gradient-based solvers).
 */
struct TargetCost {
  using Context = NoContext;

  ObstacleSet obstacles;
  Vec2 target = Vec2::Zero();
  double target_weight = 1.0;
  double terminal_weight = 1.0;
  double huber_width = 1.0;
  bool hard = true;
  double penalty_scale = 0.3;
  double penalty_weight = 1.0;

  double running(const JointState& x, const Context&) const {
    double total = target_weight * attraction(x);
    if (!hard) {
      total += smooth_obstacle_penalty(x, obstacles, penalty_scale, penalty_weight);
    }
    return total;
  }
  double terminal(const JointState& x, const Context&) const { return terminal_weight * attraction(x); }
  bool violated(const JointState& x, const Context&) const { return hard && obstacle_violation(x, obstacles); }
  Context advance_context(const JointState&, const Context& c, double) const { return c; }

  CostDerivatives running_derivatives(const JointState& x, const Context&) const {
    auto out = hard ? CostDerivatives::zero(x.vector().size())
                    : smooth_obstacle_penalty_derivatives(x, obstacles, penalty_scale, penalty_weight);
    add_attraction(x, target_weight, out);
    return out;
  }
  CostDerivatives terminal_derivatives(const JointState& x, const Context&) const {
    auto out = CostDerivatives::zero(x.vector().size());
    add_attraction(x, terminal_weight, out);
    return out;
  }

 private:
  double attraction(const JointState& x) const {
    double total = 0.0;
    for (std::size_t i = 0; i < x.num_agents(); ++i) {
      const double sq = (x.position(i) - target).squaredNorm();
      total += std::sqrt(sq + huber_width * huber_width) - huber_width;
    }
    return total;
  }

  void add_attraction(const JointState& x, double weight, CostDerivatives& out) const {
    for (std::size_t i = 0; i < x.num_agents(); ++i) {
      const Vec2 delta = x.position(i) - target;
      const double q = std::sqrt(delta.squaredNorm() + huber_width * huber_width);
      const auto base = 4 * static_cast<Eigen::Index>(i);
      out.value += weight * (q - huber_width);
      out.gradient.segment<2>(base) += weight * delta / q;
      out.hessian.block<2, 2>(base, base) +=
          weight * (Eigen::Matrix2d::Identity() / q - delta * delta.transpose() / (q * q * q));
    }
  }
};

}  // namespace pisoc

#endif
