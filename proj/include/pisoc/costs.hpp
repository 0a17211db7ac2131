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

#ifndef PISOC_COSTS_HPP
#define PISOC_COSTS_HPP

#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "pisoc/types.hpp"

/**
 * \file
 * \brief Path cost functional, control-cost/noise coupling and the scenario state costs.
 *
 * State costs are rates (cost per second). Every differentiable cost can also report its gradient and
 * Hessian with respect to the stacked joint state, in the layout documented on JointState.
 */

namespace pisoc {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Control cost R tied to the noise level: R = lambda / sigma_u^2 (isotropic).
/**
 * R is never set independently, so lambda * R^-1 = Sigma_u holds by construction. A zero noise level
 * gives an infinite R; path costs then charge nothing for a zero control and +inf for anything else.
 */
class ControlCostSpec {
 public:
  ControlCostSpec(double lambda, double sigma_u) : lambda_(lambda), sigma_u_(sigma_u) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
      throw ContractViolation("control cost: lambda must be positive");
    }
    if (!(sigma_u >= 0.0) || !std::isfinite(sigma_u)) {
      throw ContractViolation("control cost: sigma_u must be non-negative");
    }
  }

  [[nodiscard]] double lambda() const { return lambda_; }
  [[nodiscard]] double sigma_u() const { return sigma_u_; }
  [[nodiscard]] double r() const { return sigma_u_ > 0.0 ? lambda_ / (sigma_u_ * sigma_u_) : kInfinity; }

  /// Instantaneous control cost rate 1/2 u^T R u.
  template <class Derived>
  [[nodiscard]] double rate(const Eigen::MatrixBase<Derived>& u) const {
    const double sq = u.squaredNorm();
    return sq == 0.0 ? 0.0 : 0.5 * r() * sq;
  }

 private:
  double lambda_;
  double sigma_u_;
};

/// Value, gradient and Hessian of a scalar cost with respect to the joint state.
struct CostDerivatives {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;

  static CostDerivatives zero(Eigen::Index n) {
    return CostDerivatives{0.0, Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Zero(n, n)};
  }
};

/// Context carried alongside the joint state for scenarios without exogenous state.
struct NoContext {
  friend bool operator==(NoContext, NoContext) { return true; }
};

/// A scenario state cost: running rate, terminal cost and a hard-constraint predicate.
/**
 * `Context` holds exogenous scenario state (for example a target that moves on its own) and is
 * advanced deterministically alongside the agents.
 */
template <class M>
concept CostModel = requires(const M& m, const JointState& x, const typename M::Context& c, double dt) {
  typename M::Context;
  { m.running(x, c) } -> std::convertible_to<double>;
  { m.terminal(x, c) } -> std::convertible_to<double>;
  { m.violated(x, c) } -> std::convertible_to<bool>;
  { m.advance_context(x, c, dt) } -> std::convertible_to<typename M::Context>;
};

/// A cost model that reports analytic first and second derivatives.
template <class M>
concept DifferentiableCostModel = CostModel<M> && requires(const M& m, const JointState& x, const typename M::Context& c) {
  { m.running_derivatives(x, c) } -> std::same_as<CostDerivatives>;
  { m.terminal_derivatives(x, c) } -> std::same_as<CostDerivatives>;
};

/// Cost-to-go of a sampled path.
/**
 * Returns r_T(x_T) + sum_t (r_t(x_t) + 1/2 u_t^T R u_t) dt, or +inf when any state (including x_T)
 * violates a hard constraint. The context starts at `context` and is advanced along the trajectory.
 */
template <CostModel Model>
double path_cost(std::span<const JointState> trajectory, const ControlSequence& controls, const ControlCostSpec& spec,
                 const Model& model, double dt, typename Model::Context context = {}) {
  if (trajectory.size() != controls.steps() + 1) {
    throw ContractViolation("path_cost: trajectory must have one more state than controls");
  }
  double total = 0.0;
  for (std::size_t t = 0; t < controls.steps(); ++t) {
    if (model.violated(trajectory[t], context)) {
      return kInfinity;
    }
    total += (model.running(trajectory[t], context) + spec.rate(controls.at(t))) * dt;
    context = model.advance_context(trajectory[t], context, dt);
  }
  if (model.violated(trajectory.back(), context)) {
    return kInfinity;
  }
  return total + model.terminal(trajectory.back(), context);
}

// ---------------------------------------------------------------------------------------------------
// Holding pattern and cat-and-mouse rates.

/// How the radial term ties agents to the circle of radius d.
enum class ArenaShape {
  kRing,  ///< exp(|‖p‖ - d|): attraction to the circle from both sides
  kDisc,  ///< exp(‖p‖ - d): soft boundary, negligible well inside the disc
};

struct HoldingPatternParams {
  double v_min = 1.0;  ///< [m/s]
  double v_max = 3.0;  ///< [m/s]
  double d = 7.0;      ///< radius [m]
  double c_hit = 20.0; ///< pair penalty weight [cost m]
  ArenaShape arena = ArenaShape::kRing;

  void validate() const {
    if (!(v_min < v_max)) {
      throw ContractViolation("holding pattern: v_min must be below v_max");
    }
    if (!(d > 0.0)) {
      throw ContractViolation("holding pattern: d must be positive");
    }
    if (!(c_hit >= 0.0)) {
      throw ContractViolation("holding pattern: c_hit must be non-negative");
    }
  }
};

struct CatMouseParams {
  HoldingPatternParams hp{1.0, 4.0, 30.0, 20.0, ArenaShape::kDisc};
  double v_max_mouse = 3.0;

  void validate() const {
    hp.validate();
    if (!(v_max_mouse > 0.0)) {
      throw ContractViolation("cat and mouse: v_max_mouse must be positive");
    }
  }
};

namespace detail {

// Adds f(‖w‖) with first/second radial derivatives into a 2x2 block at `offset`.
inline void add_radial(double f1, double f2, const Vec2& w, Eigen::VectorXd& g, Eigen::MatrixXd& h,
                       Eigen::Index offset) {
  const double n = w.norm();
  if (n < 1e-12) {
    h.block<2, 2>(offset, offset) += f2 * Eigen::Matrix2d::Identity();
    return;
  }
  const Vec2 dir = w / n;
  const Eigen::Matrix2d outer = dir * dir.transpose();
  g.segment<2>(offset) += f1 * dir;
  h.block<2, 2>(offset, offset) += f2 * outer + (f1 / n) * (Eigen::Matrix2d::Identity() - outer);
}

template <bool kWithDerivatives>
double holding_pattern_impl(const JointState& x, const HoldingPatternParams& hp, Eigen::VectorXd* g,
                            Eigen::MatrixXd* h) {
  const std::size_t m = x.num_agents();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const Vec2 p = x.position(i);
    const Vec2 v = x.velocity(i);
    const double s = v.norm();
    const double e_fast = std::exp(s - hp.v_max);
    const double e_slow = std::exp(hp.v_min - s);
    const double r = p.norm();
    const double dev = r - hp.d;
    const double e_rad = std::exp(hp.arena == ArenaShape::kRing ? std::abs(dev) : dev);
    total += e_fast + e_slow + e_rad;
    if constexpr (kWithDerivatives) {
      const auto base = 4 * static_cast<Eigen::Index>(i);
      add_radial(e_fast - e_slow, e_fast + e_slow, v, *g, *h, base + 2);
      const double sign = hp.arena == ArenaShape::kRing ? (dev >= 0.0 ? 1.0 : -1.0) : 1.0;
      add_radial(sign * e_rad, e_rad, p, *g, *h, base);
    }
    for (std::size_t j = i + 1; j < m; ++j) {
      const Vec2 delta = p - x.position(j);
      const double sep = delta.norm();
      if (sep == 0.0) {
        return kInfinity;
      }
      total += hp.c_hit / sep;
      if constexpr (kWithDerivatives) {
        const auto bi = 4 * static_cast<Eigen::Index>(i);
        const auto bj = 4 * static_cast<Eigen::Index>(j);
        const double inv3 = 1.0 / (sep * sep * sep);
        const Vec2 gi = -hp.c_hit * inv3 * delta;
        const Eigen::Matrix2d block =
            hp.c_hit * (3.0 * inv3 / (sep * sep) * delta * delta.transpose() - inv3 * Eigen::Matrix2d::Identity());
        g->segment<2>(bi) += gi;
        g->segment<2>(bj) -= gi;
        h->block<2, 2>(bi, bi) += block;
        h->block<2, 2>(bj, bj) += block;
        h->block<2, 2>(bi, bj) -= block;
        h->block<2, 2>(bj, bi) -= block;
      }
    }
  }
  return total;
}

}  // namespace detail

/// Holding-pattern rate: speed band, radial term and pairwise C_hit / separation.
/**
 * s_i is the speed ‖v_i‖. Coincident agents give +inf.
 */
inline double holding_pattern_cost(const JointState& x, const HoldingPatternParams& params) {
  if (x.num_agents() == 0) {
    throw ContractViolation("holding_pattern_cost: at least one agent required");
  }
  return detail::holding_pattern_impl<false>(x, params, nullptr, nullptr);
}

inline CostDerivatives holding_pattern_derivatives(const JointState& x, const HoldingPatternParams& params) {
  auto out = CostDerivatives::zero(x.vector().size());
  out.value = detail::holding_pattern_impl<true>(x, params, &out.gradient, &out.hessian);
  return out;
}

/// Cat-and-mouse rate: the holding-pattern rate plus the summed cat-to-mouse distances.
inline double cat_mouse_cost(const JointState& x, const Vec2& mouse, const CatMouseParams& params) {
  double total = holding_pattern_cost(x, params.hp);
  for (std::size_t i = 0; i < x.num_agents(); ++i) {
    total += (x.position(i) - mouse).norm();
  }
  return total;
}

inline CostDerivatives cat_mouse_derivatives(const JointState& x, const Vec2& mouse, const CatMouseParams& params) {
  auto out = holding_pattern_derivatives(x, params.hp);
  for (std::size_t i = 0; i < x.num_agents(); ++i) {
    const Vec2 w = x.position(i) - mouse;
    out.value += w.norm();
    if (w.norm() > 1e-12) {
      detail::add_radial(1.0, 0.0, w, out.gradient, out.hessian, 4 * static_cast<Eigen::Index>(i));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------------------------------
// Obstacles.

/// Closed axis-aligned rectangle.
struct Box {
  Vec2 lo = Vec2::Zero();
  Vec2 hi = Vec2::Zero();

  friend bool operator==(const Box& a, const Box& b) { return a.lo == b.lo && a.hi == b.hi; }
};

struct ObstacleSet {
  std::vector<Box> boxes;
  double agent_radius = 0.5;  ///< [m]

  void validate() const {
    for (const auto& b : boxes) {
      if (!(b.hi.x() > b.lo.x() && b.hi.y() > b.lo.y())) {
        throw ContractViolation("obstacles: boxes need positive area (lo < hi on both axes)");
      }
    }
    if (!(agent_radius >= 0.0)) {
      throw ContractViolation("obstacles: agent_radius must be non-negative");
    }
  }
};

/// Signed distance from a point to a box (negative inside) with its derivatives.
struct SignedDistance {
  double value = 0.0;
  Vec2 gradient = Vec2::Zero();
  Eigen::Matrix2d hessian = Eigen::Matrix2d::Zero();
};

inline SignedDistance signed_distance(const Vec2& p, const Box& box) {
  SignedDistance out;
  const Vec2 closest = p.cwiseMax(box.lo).cwiseMin(box.hi);
  const Vec2 offset = p - closest;
  const double dist = offset.norm();
  if (dist > 0.0) {
    out.value = dist;
    out.gradient = offset / dist;
    if (offset.x() != 0.0 && offset.y() != 0.0) {
      // corner region: distance to a point
      out.hessian = (Eigen::Matrix2d::Identity() - out.gradient * out.gradient.transpose()) / dist;
    }
    return out;
  }
  const double faces[4] = {p.x() - box.lo.x(), box.hi.x() - p.x(), p.y() - box.lo.y(), box.hi.y() - p.y()};
  const Vec2 normals[4] = {Vec2(-1, 0), Vec2(1, 0), Vec2(0, -1), Vec2(0, 1)};
  int nearest = 0;
  for (int k = 1; k < 4; ++k) {
    if (faces[k] < faces[nearest]) {
      nearest = k;
    }
  }
  out.value = -faces[nearest];
  out.gradient = normals[nearest];
  return out;
}

/// True iff any agent disc touches a box or two agent discs touch. Contact counts as collision.
inline bool obstacle_violation(const JointState& x, const ObstacleSet& obstacles) {
  const std::size_t m = x.num_agents();
  const double r = obstacles.agent_radius;
  for (std::size_t i = 0; i < m; ++i) {
    const Vec2 p = x.position(i);
    for (const auto& box : obstacles.boxes) {
      const Vec2 closest = p.cwiseMax(box.lo).cwiseMin(box.hi);
      if ((p - closest).squaredNorm() <= r * r) {
        return true;
      }
    }
    for (std::size_t j = i + 1; j < m; ++j) {
      if ((p - x.position(j)).squaredNorm() <= 4.0 * r * r) {
        return true;
      }
    }
  }
  return false;
}

namespace detail {

template <bool kWithDerivatives>
double obstacle_penalty_impl(const JointState& x, const ObstacleSet& obstacles, double scale, double weight,
                             Eigen::VectorXd* g, Eigen::MatrixXd* h) {
  double total = 0.0;
  for (std::size_t i = 0; i < x.num_agents(); ++i) {
    const Vec2 p = x.position(i);
    for (const auto& box : obstacles.boxes) {
      const auto sd = signed_distance(p, box);
      const double f = weight * std::exp(-(sd.value - obstacles.agent_radius) / scale);
      total += f;
      if constexpr (kWithDerivatives) {
        const auto base = 4 * static_cast<Eigen::Index>(i);
        g->segment<2>(base) -= (f / scale) * sd.gradient;
        h->block<2, 2>(base, base) +=
            (f / (scale * scale)) * sd.gradient * sd.gradient.transpose() - (f / scale) * sd.hessian;
      }
    }
  }
  return total;
}

}  // namespace detail

/// Smooth proximity penalty: sum over agents and boxes of weight * exp(-clearance / scale).
/**
 * Clearance is the signed distance of the agent disc to the box (centre distance minus agent_radius).
 * Twice differentiable away from the box's region boundaries.
 */
inline double smooth_obstacle_penalty(const JointState& x, const ObstacleSet& obstacles, double scale, double weight) {
  if (!(scale > 0.0)) {
    throw ContractViolation("smooth_obstacle_penalty: scale must be positive");
  }
  return detail::obstacle_penalty_impl<false>(x, obstacles, scale, weight, nullptr, nullptr);
}

inline CostDerivatives smooth_obstacle_penalty_derivatives(const JointState& x, const ObstacleSet& obstacles,
                                                           double scale, double weight) {
  if (!(scale > 0.0)) {
    throw ContractViolation("smooth_obstacle_penalty: scale must be positive");
  }
  auto out = CostDerivatives::zero(x.vector().size());
  out.value = detail::obstacle_penalty_impl<true>(x, obstacles, scale, weight, &out.gradient, &out.hessian);
  return out;
}

}  // namespace pisoc

#endif
