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

#ifndef PISOC_MOUSE_HPP
#define PISOC_MOUSE_HPP

#include <cstddef>

#include "pisoc/types.hpp"

namespace pisoc {

struct MouseState {
  Vec2 p = Vec2::Zero();  ///< [m]
  Vec2 v = Vec2::Zero();  ///< [m/s]
};

/// True when some cat sits exactly on the mouse.
inline bool cat_on_mouse(const Vec2& mouse, const JointState& cats) {
  for (std::size_t i = 0; i < cats.num_agents(); ++i) {
    if ((cats.position(i) - mouse).squaredNorm() == 0.0) {
      return true;
    }
  }
  return false;
}

/// Autonomous mouse velocity: full speed along sum_i (p_mouse - p_i) / ‖p_i - p_mouse‖^2.
/**
 * With `escape == false` the direction is flipped to sum_i (p_i - p_mouse) / ‖.‖^2 instead.
 * A vanishing direction (below 1e-9) or a cat on the mouse yields zero velocity; the caller treats the
 * latter as a capture.
 */
inline Vec2 mouse_policy(const Vec2& mouse, const JointState& cats, double v_max_mouse, bool escape = true) {
  if (cats.num_agents() == 0) {
    throw ContractViolation("mouse_policy: at least one cat required");
  }
  Vec2 raw = Vec2::Zero();
  for (std::size_t i = 0; i < cats.num_agents(); ++i) {
    const Vec2 away = mouse - cats.position(i);
    const double sq = away.squaredNorm();
    if (sq == 0.0) {
      return Vec2::Zero();
    }
    raw += away / sq;
  }
  if (!escape) {
    raw = -raw;
  }
  const double n = raw.norm();
  if (n < 1e-9) {
    return Vec2::Zero();
  }
  return (v_max_mouse / n) * raw;
}

}  // namespace pisoc

#endif
