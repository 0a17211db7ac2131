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

#ifndef PISOC_TYPES_HPP
#define PISOC_TYPES_HPP

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

/**
 * \file
 * \brief Core value types shared by every module: planar agent states, the
 * stacked joint state and time-indexed control sequences.
 */

namespace pisoc {

using Vec2 = Eigen::Vector2d;

/// Raised when a caller breaks a documented precondition (sizes, ranges, finiteness).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Planar point-mass state of one vehicle (East, North).
struct AgentState {
  Vec2 p = Vec2::Zero();  ///< position [m]
  Vec2 v = Vec2::Zero();  ///< velocity [m/s]

  friend bool operator==(const AgentState& a, const AgentState& b) { return a.p == b.p && a.v == b.v; }
};

/// Stacked state of M agents.
/**
 * Storage is agent-major with four entries per agent, (p_E, p_N, v_E, v_N). The same layout is used by
 * every log file and by the derivative vectors returned from differentiable costs.
 */
class JointState {
 public:
  static constexpr Eigen::Index kAgentDim = 4;

  JointState() = default;

  explicit JointState(std::size_t num_agents) : data_(Eigen::VectorXd::Zero(kAgentDim * index(num_agents))) {}

  explicit JointState(std::span<const AgentState> agents) : JointState(agents.size()) {
    for (std::size_t i = 0; i < agents.size(); ++i) {
      position(i) = agents[i].p;
      velocity(i) = agents[i].v;
    }
  }

  JointState(std::initializer_list<AgentState> agents)
      : JointState(std::span<const AgentState>(agents.begin(), agents.size())) {}

  /// Wraps a raw stacked vector; its size must be a multiple of four.
  static JointState from_vector(Eigen::VectorXd data) {
    if (data.size() % kAgentDim != 0) {
      throw ContractViolation("joint state vector size must be a multiple of 4");
    }
    JointState out;
    out.data_ = std::move(data);
    return out;
  }

  [[nodiscard]] std::size_t num_agents() const { return static_cast<std::size_t>(data_.size() / kAgentDim); }

  using Block = Eigen::VectorBlock<Eigen::VectorXd, 2>;
  using ConstBlock = Eigen::VectorBlock<const Eigen::VectorXd, 2>;

  Block position(std::size_t i) { return data_.segment<2>(kAgentDim * index(i)); }
  ConstBlock position(std::size_t i) const { return data_.segment<2>(kAgentDim * index(i)); }
  Block velocity(std::size_t i) { return data_.segment<2>(kAgentDim * index(i) + 2); }
  ConstBlock velocity(std::size_t i) const { return data_.segment<2>(kAgentDim * index(i) + 2); }

  [[nodiscard]] AgentState agent(std::size_t i) const { return AgentState{position(i), velocity(i)}; }

  [[nodiscard]] std::vector<AgentState> agents() const {
    std::vector<AgentState> out;
    out.reserve(num_agents());
    for (std::size_t i = 0; i < num_agents(); ++i) {
      out.push_back(agent(i));
    }
    return out;
  }

  [[nodiscard]] const Eigen::VectorXd& vector() const { return data_; }
  [[nodiscard]] Eigen::VectorXd& vector() { return data_; }

  [[nodiscard]] bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const JointState& a, const JointState& b) {
    return a.data_.size() == b.data_.size() && a.data_ == b.data_;
  }

 private:
  static Eigen::Index index(std::size_t i) { return static_cast<Eigen::Index>(i); }

  Eigen::VectorXd data_;
};

/// Per-agent accelerations over a planning horizon.
/**
 * Column `s` holds the stacked 2M-vector of accelerations applied during step `s`, agent-major
 * (u_E, u_N) per agent.
 */
class ControlSequence {
 public:
  ControlSequence() = default;

  ControlSequence(std::size_t steps, std::size_t num_agents)
      : u_(Eigen::MatrixXd::Zero(2 * static_cast<Eigen::Index>(num_agents), static_cast<Eigen::Index>(steps))) {}

  static ControlSequence from_matrix(Eigen::MatrixXd u) {
    if (u.rows() % 2 != 0) {
      throw ContractViolation("control matrix must have 2 rows per agent");
    }
    ControlSequence out;
    out.u_ = std::move(u);
    return out;
  }

  [[nodiscard]] std::size_t steps() const { return static_cast<std::size_t>(u_.cols()); }
  [[nodiscard]] std::size_t num_agents() const { return static_cast<std::size_t>(u_.rows() / 2); }

  auto at(std::size_t s) { return u_.col(static_cast<Eigen::Index>(s)); }
  auto at(std::size_t s) const { return u_.col(static_cast<Eigen::Index>(s)); }

  auto control(std::size_t s, std::size_t agent) {
    return u_.col(static_cast<Eigen::Index>(s)).segment<2>(2 * static_cast<Eigen::Index>(agent));
  }
  auto control(std::size_t s, std::size_t agent) const {
    return u_.col(static_cast<Eigen::Index>(s)).segment<2>(2 * static_cast<Eigen::Index>(agent));
  }

  [[nodiscard]] const Eigen::MatrixXd& matrix() const { return u_; }
  [[nodiscard]] Eigen::MatrixXd& matrix() { return u_; }

  friend bool operator==(const ControlSequence& a, const ControlSequence& b) {
    return a.u_.rows() == b.u_.rows() && a.u_.cols() == b.u_.cols() && a.u_ == b.u_;
  }

 private:
  Eigen::MatrixXd u_;
};

/// Number of fixed steps of length `dt` covering `duration`, rounding to the nearest integer.
inline std::size_t steps_for(double duration, double dt) {
  return static_cast<std::size_t>(std::llround(duration / dt));
}

}  // namespace pisoc

#endif
