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

#ifndef PISOC_TESTS_SUPPORT_GRADIENT_CHECK_HPP_
#define PISOC_TESTS_SUPPORT_GRADIENT_CHECK_HPP_

#include <algorithm>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pisoc/cost_models.hpp"
#include "pisoc/costs.hpp"
#include "pisoc/ilqg.hpp"
#include "pisoc/random.hpp"
#include "pisoc/types.hpp"

namespace pisoc::testing {

inline constexpr double kFiniteDifferenceStep = 1e-6;

/// ‖a - b‖ / ‖a‖, or the absolute error when a vanishes.
inline double relative_error(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& candidate) {
  const double scale = reference.norm();
  const double diff = (reference - candidate).norm();
  return scale > 0.0 ? diff / scale : diff;
}

/// Worst gradient and Hessian mismatch between analytic derivatives and central differences.
struct DerivativeCheck {
  double gradient = 0.0;
  double hessian = 0.0;
};

inline DerivativeCheck check_derivatives(const std::function<double(const JointState&)>& value,
                                         const std::function<CostDerivatives(const JointState&)>& derivatives,
                                         const JointState& x) {
  const auto f = [&](const Eigen::VectorXd& v) { return value(JointState::from_vector(v)); };
  const auto grad = [&](const Eigen::VectorXd& v) { return derivatives(JointState::from_vector(v)).gradient; };
  const CostDerivatives d = derivatives(x);
  DerivativeCheck out;
  out.gradient = relative_error(d.gradient, finite_difference_gradient(f, x.vector(), kFiniteDifferenceStep));
  out.hessian = relative_error(d.hessian, finite_difference_jacobian(grad, x.vector(), kFiniteDifferenceStep));
  return out;
}

/// Box layout used by the obstacle gradient checks.
inline ObstacleSet check_obstacles() {
  return ObstacleSet{{Box{Vec2(6.0, -4.0), Vec2(10.0, -0.7)}, Box{Vec2(6.0, 0.7), Vec2(10.0, 20.0)}}, 0.5};
}

/// A state whose agents all keep at least `clearance` between their discs and every box.
inline JointState random_clear_state(NormalStream& rng, std::size_t agents, const ObstacleSet& obstacles,
                                     double clearance) {
  JointState x(agents);
  for (std::size_t i = 0; i < agents; ++i) {
    for (;;) {
      const Vec2 p(rng.uniform(2.0, 14.0), rng.uniform(-6.0, 3.0));
      bool clear = true;
      for (const auto& box : obstacles.boxes) {
        clear = clear && signed_distance(p, box).value > obstacles.agent_radius + clearance;
      }
      if (clear) {
        x.position(i) = p;
        break;
      }
    }
    x.velocity(i) = Vec2(rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0));
  }
  return x;
}

/// Agents scattered in a disc of radius `spread` with pairwise separation of at least 1 m.
inline JointState random_formation_state(NormalStream& rng, std::size_t agents, double spread) {
  JointState x(agents);
  for (std::size_t i = 0; i < agents; ++i) {
    for (;;) {
      const Vec2 p(rng.uniform(-spread, spread), rng.uniform(-spread, spread));
      bool ok = p.norm() > 0.5;
      for (std::size_t j = 0; j < i; ++j) {
        ok = ok && (p - x.position(j)).norm() > 1.0;
      }
      if (ok) {
        x.position(i) = p;
        break;
      }
    }
    x.velocity(i) = Vec2(rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0));
  }
  return x;
}

}  // namespace pisoc::testing

#endif
