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

#ifndef PISOC_DYNAMICS_HPP
#define PISOC_DYNAMICS_HPP

#include <cmath>
#include <cstddef>

#include <Eigen/Core>

#include "pisoc/random.hpp"
#include "pisoc/types.hpp"

/**
 * \file
 * \brief Noisy double-integrator propagation for M decoupled planar agents.
 *
 * Per agent and axis: p' = p + v dt, v' = v + u dt + dxi, with dxi ~ N(0, sigma_u^2 dt).
 */

namespace pisoc {

/// Wiener increments over one step, 2 entries per agent (same layout as a control column).
using NoiseIncrement = Eigen::VectorXd;

struct DynamicsModel {
  double dt = 1.0 / 15.0;     ///< step [s]
  double sigma_u = 0.0;       ///< per-axis noise std [m/s^2 per sqrt(s)]
  std::size_t num_agents = 1;

  DynamicsModel() = default;

  DynamicsModel(double dt_s, double sigma, std::size_t agents) : dt(dt_s), sigma_u(sigma), num_agents(agents) {
    validate();
  }

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) {
      throw ContractViolation("dynamics: dt must be positive");
    }
    if (!(sigma_u >= 0.0) || !std::isfinite(sigma_u)) {
      throw ContractViolation("dynamics: sigma_u must be non-negative");
    }
    if (num_agents == 0) {
      throw ContractViolation("dynamics: at least one agent required");
    }
  }

  /// Isotropic noise covariance Sigma_u = sigma_u^2 I (per axis entry).
  [[nodiscard]] double noise_variance() const { return sigma_u * sigma_u; }
};

namespace detail {

// Unchecked hot-path update on raw stacked storage.
inline void advance(double* x, const double* u, const double* xi, std::size_t agents, double dt) {
  for (std::size_t i = 0; i < agents; ++i) {
    double* s = x + 4 * i;
    const double* ui = u + 2 * i;
    const double* xii = xi + 2 * i;
    s[0] += s[2] * dt;
    s[1] += s[3] * dt;
    s[2] += ui[0] * dt + xii[0];
    s[3] += ui[1] * dt + xii[1];
  }
}

}  // namespace detail

/// One Euler-Maruyama step, exact for the LTI pair given the increment.
inline JointState step(const JointState& state, const Eigen::Ref<const Eigen::VectorXd>& control,
                       const Eigen::Ref<const Eigen::VectorXd>& noise, double dt) {
  const auto m = static_cast<Eigen::Index>(state.num_agents());
  if (control.size() != 2 * m || noise.size() != 2 * m) {
    throw ContractViolation("step: control and noise must have 2 entries per agent");
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw ContractViolation("step: dt must be positive");
  }
  if (!state.all_finite() || !control.allFinite() || !noise.allFinite()) {
    throw ContractViolation("step: non-finite input");
  }
  JointState next = state;
  const Eigen::VectorXd u = control;
  const Eigen::VectorXd xi = noise;
  detail::advance(next.vector().data(), u.data(), xi.data(), state.num_agents(), dt);
  return next;
}

/// Draws one increment: each entry N(0, sigma_u^2 dt), independent.
inline NoiseIncrement sample_noise(NormalStream& rng, const DynamicsModel& model) {
  NoiseIncrement xi(2 * static_cast<Eigen::Index>(model.num_agents));
  if (model.sigma_u == 0.0) {
    xi.setZero();
    return xi;
  }
  const double scale = model.sigma_u * std::sqrt(model.dt);
  for (Eigen::Index j = 0; j < xi.size(); ++j) {
    xi[j] = scale * rng();
  }
  return xi;
}

/// Target velocity handed to the low-level layer: v + (t' - t) u*.
inline Vec2 propagate_velocity_command(const Vec2& v_now, const Vec2& u_star, double handoff_dt) {
  return v_now + handoff_dt * u_star;
}

}  // namespace pisoc

#endif
