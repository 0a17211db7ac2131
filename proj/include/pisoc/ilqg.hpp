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

#ifndef PISOC_ILQG_HPP
#define PISOC_ILQG_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "pisoc/costs.hpp"
#include "pisoc/dynamics.hpp"
#include "pisoc/types.hpp"

/**
 * \file
 * \brief Iterative LQG trajectory optimizer, the certainty-equivalent baseline.
 *
 * Each iteration quadratizes the state cost around the nominal trajectory, runs a Riccati backward pass
 * on the exact double-integrator linearization and rolls out a new nominal with the resulting affine
 * policy. Noise never enters the optimization.
 */

namespace pisoc {

/// Non-finite cost or derivative along a trajectory.
class IlqgError : public std::runtime_error {
 public:
  IlqgError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}

  [[nodiscard]] std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

enum class IlqgStepMode {
  kConstant,      ///< blend by a fixed step_size every iteration
  kBacktracking,  ///< try 1, 1/2, 1/4, ... down to step_size
};

struct IlqgConfig {
  std::size_t max_iters = 1000;
  double step_size = 0.005;  ///< fraction of the Newton step applied per iteration
  double horizon_s = 3.0;
  double dt_s = 1.0 / 15.0;
  double convergence_tol = 1e-6;  ///< relative cost improvement that ends the iterations
  double control_weight = 1.0;    ///< R (isotropic), fixed independently of any noise level
  IlqgStepMode mode = IlqgStepMode::kConstant;
  double hessian_floor = 1e-6;
  double damping_init = 0.0;
  double damping_min = 1e-6;
  double damping_max = 1e10;
  double damping_factor = 10.0;

  void validate() const {
    if (max_iters < 1) {
      throw ContractViolation("ilqg: max_iters must be at least 1");
    }
    if (!(step_size > 0.0 && step_size <= 1.0)) {
      throw ContractViolation("ilqg: step_size must lie in (0, 1]");
    }
    if (!(dt_s > 0.0) || !(horizon_s >= dt_s - 1e-12)) {
      throw ContractViolation("ilqg: need horizon_s >= dt_s > 0");
    }
    if (!(control_weight > 0.0)) {
      throw ContractViolation("ilqg: control_weight must be positive");
    }
    if (!(convergence_tol >= 0.0)) {
      throw ContractViolation("ilqg: convergence_tol must be non-negative");
    }
  }

  [[nodiscard]] std::size_t steps() const { return steps_for(horizon_s, dt_s); }
};

struct IlqgSolution {
  std::vector<JointState> nominal_states;     ///< steps + 1 states
  ControlSequence nominal_controls;
  std::vector<Eigen::MatrixXd> feedback_gains;  ///< K_t, u = u_nom + K_t (x - x_nom)
  std::vector<double> cost_trace;             ///< initial cost, then one entry per accepted iteration
  std::size_t iterations = 0;
  bool converged = false;
  bool diverged = false;

  /// Affine policy evaluated at step t.
  [[nodiscard]] Eigen::VectorXd control(std::size_t t, const JointState& x, bool feedback = true) const {
    Eigen::VectorXd u = nominal_controls.at(t);
    if (feedback) {
      u += feedback_gains[t] * (x.vector() - nominal_states[t].vector());
    }
    return u;
  }
};

// ---------------------------------------------------------------------------------------------------
// Finite differences.

/// Central-difference gradient with per-coordinate step h * max(1, |x_i|).
inline Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                                  const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + step;
    const double fp = f(probe);
    probe[i] = x[i] - step;
    const double fm = f(probe);
    probe[i] = x[i];
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

/// Central-difference Hessian from second differences of f, symmetrized.
inline Eigen::MatrixXd finite_difference_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                                                 const Eigen::VectorXd& x, double h = 1e-4) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd hess(n, n);
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double hi = h * std::max(1.0, std::abs(x[i]));
    for (Eigen::Index j = i; j < n; ++j) {
      const double hj = h * std::max(1.0, std::abs(x[j]));
      auto eval = [&](double si, double sj) {
        probe = x;
        probe[i] += si * hi;
        probe[j] += sj * hj;
        return f(probe);
      };
      const double value = (eval(1, 1) - eval(1, -1) - eval(-1, 1) + eval(-1, -1)) / (4.0 * hi * hj);
      hess(i, j) = value;
      hess(j, i) = value;
    }
  }
  return hess;
}

/// Central-difference Jacobian of a vector function (used to differentiate analytic gradients).
inline Eigen::MatrixXd finite_difference_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                                  const Eigen::VectorXd& x, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd jac(f0.size(), x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = h * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + step;
    const Eigen::VectorXd fp = f(probe);
    probe[i] = x[i] - step;
    const Eigen::VectorXd fm = f(probe);
    probe[i] = x[i];
    jac.col(i) = (fp - fm) / (2.0 * step);
  }
  return jac;
}

/// Symmetrizes and lifts every eigenvalue below `floor` to `floor`.
inline Eigen::MatrixXd clamp_to_psd(const Eigen::MatrixXd& h, double floor) {
  const Eigen::MatrixXd sym = 0.5 * (h + h.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("clamp_to_psd: eigen decomposition failed");
  }
  if (eig.eigenvalues().minCoeff() >= floor) {
    return sym;
  }
  const Eigen::VectorXd clamped = eig.eigenvalues().cwiseMax(floor);
  return eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
}

namespace detail {

template <CostModel Cost>
CostDerivatives derivatives_at(const Cost& cost, const JointState& x, const typename Cost::Context& c, bool terminal) {
  if constexpr (DifferentiableCostModel<Cost>) {
    return terminal ? cost.terminal_derivatives(x, c) : cost.running_derivatives(x, c);
  } else {
    auto f = [&](const Eigen::VectorXd& v) {
      const auto state = JointState::from_vector(v);
      return terminal ? cost.terminal(state, c) : cost.running(state, c);
    };
    CostDerivatives out;
    out.value = f(x.vector());
    out.gradient = finite_difference_gradient(f, x.vector());
    out.hessian = finite_difference_hessian(f, x.vector());
    return out;
  }
}

}  // namespace detail

/// Per-step quadratic models of the state cost along a trajectory; the last entry is the terminal cost.
/**
 * Uses the model's analytic derivatives when it provides them, central differences otherwise. Hessians
 * come back symmetrized and clamped to eigenvalues >= hessian_floor. Throws IlqgError on non-finite
 * values.
 */
template <CostModel Cost>
std::vector<CostDerivatives> quadratize(const Cost& cost, std::span<const JointState> trajectory, double dt,
                                        typename Cost::Context context = {}, double hessian_floor = 1e-6) {
  std::vector<CostDerivatives> out;
  out.reserve(trajectory.size());
  for (std::size_t t = 0; t < trajectory.size(); ++t) {
    const bool terminal = t + 1 == trajectory.size();
    auto d = detail::derivatives_at(cost, trajectory[t], context, terminal);
    if (!std::isfinite(d.value) || !d.gradient.allFinite() || !d.hessian.allFinite()) {
      throw IlqgError("quadratize: non-finite cost derivatives", t);
    }
    d.hessian = clamp_to_psd(d.hessian, hessian_floor);
    out.push_back(std::move(d));
    if (!terminal) {
      context = cost.advance_context(trajectory[t], context, dt);
    }
  }
  return out;
}

namespace detail {

struct Rollout {
  std::vector<JointState> states;
  ControlSequence controls;
  double cost = kInfinity;
  std::size_t bad_step = 0;
};

template <CostModel Cost>
Rollout roll_out(const JointState& x0, const ControlSequence& u, const Cost& cost, typename Cost::Context ctx,
                 const IlqgConfig& cfg) {
  Rollout out;
  out.controls = u;
  out.states.reserve(u.steps() + 1);
  out.states.push_back(x0);
  const std::size_t agents = x0.num_agents();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(agents));
  double total = 0.0;
  for (std::size_t t = 0; t < u.steps(); ++t) {
    const JointState& x = out.states.back();
    const double rate = cost.running(x, ctx) + 0.5 * cfg.control_weight * u.at(t).squaredNorm();
    if (!std::isfinite(rate)) {
      out.bad_step = t;
      return out;
    }
    total += rate * cfg.dt_s;
    ctx = cost.advance_context(x, ctx, cfg.dt_s);
    JointState next = x;
    const Eigen::VectorXd ut = u.at(t);
    advance(next.vector().data(), ut.data(), zero.data(), agents, cfg.dt_s);
    out.states.push_back(std::move(next));
  }
  const double terminal = cost.terminal(out.states.back(), ctx);
  if (!std::isfinite(terminal)) {
    out.bad_step = u.steps();
    return out;
  }
  out.cost = total + terminal;
  return out;
}

struct BackwardPass {
  std::vector<Eigen::VectorXd> k;
  std::vector<Eigen::MatrixXd> gains;
  double expected_linear = 0.0;     // sum k^T Q_u
  double expected_quadratic = 0.0;  // sum 1/2 k^T Q_uu k
};

inline void double_integrator_jacobians(std::size_t agents, double dt, Eigen::MatrixXd& a, Eigen::MatrixXd& b) {
  const auto n = 4 * static_cast<Eigen::Index>(agents);
  a = Eigen::MatrixXd::Identity(n, n);
  b = Eigen::MatrixXd::Zero(n, n / 2);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(agents); ++i) {
    a(4 * i, 4 * i + 2) = dt;
    a(4 * i + 1, 4 * i + 3) = dt;
    b(4 * i + 2, 2 * i) = dt;
    b(4 * i + 3, 2 * i + 1) = dt;
  }
}

inline std::optional<BackwardPass> backward(const std::vector<CostDerivatives>& quad, const ControlSequence& u,
                                            const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const IlqgConfig& cfg,
                                            double damping) {
  const std::size_t steps = u.steps();
  BackwardPass out;
  out.k.resize(steps);
  out.gains.resize(steps);
  Eigen::VectorXd vx = quad.back().gradient;
  Eigen::MatrixXd vxx = quad.back().hessian;
  const double dt = cfg.dt_s;
  for (std::size_t t = steps; t-- > 0;) {
    const Eigen::VectorXd ut = u.at(t);
    const Eigen::VectorXd qx = quad[t].gradient * dt + a.transpose() * vx;
    const Eigen::VectorXd qu = cfg.control_weight * dt * ut + b.transpose() * vx;
    const Eigen::MatrixXd qxx = quad[t].hessian * dt + a.transpose() * vxx * a;
    const Eigen::MatrixXd qux = b.transpose() * vxx * a;
    Eigen::MatrixXd quu = b.transpose() * vxx * b;
    quu.diagonal().array() += cfg.control_weight * dt;
    Eigen::MatrixXd quu_reg = quu;
    quu_reg.diagonal().array() += damping;
    const Eigen::LLT<Eigen::MatrixXd> llt(quu_reg);
    if (llt.info() != Eigen::Success) {
      return std::nullopt;
    }
    const Eigen::VectorXd k = -llt.solve(qu);
    const Eigen::MatrixXd gain = -llt.solve(qux);
    out.expected_linear += k.dot(qu);
    out.expected_quadratic += 0.5 * k.dot(quu * k);
    vx = qx + gain.transpose() * quu * k + gain.transpose() * qu + qux.transpose() * k;
    vxx = qxx + gain.transpose() * quu * gain + gain.transpose() * qux + qux.transpose() * gain;
    vxx = 0.5 * (vxx + vxx.transpose()).eval();
    out.k[t] = k;
    out.gains[t] = gain;
  }
  return out;
}

template <CostModel Cost>
Rollout forward(const Rollout& nominal, const BackwardPass& pass, double alpha, const Cost& cost,
                const typename Cost::Context& ctx0, const IlqgConfig& cfg) {
  const std::size_t steps = nominal.controls.steps();
  const std::size_t agents = nominal.states.front().num_agents();
  ControlSequence u(steps, agents);
  JointState x = nominal.states.front();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2 * static_cast<Eigen::Index>(agents));
  for (std::size_t t = 0; t < steps; ++t) {
    u.at(t) = nominal.controls.at(t) + alpha * pass.k[t] +
              pass.gains[t] * (x.vector() - nominal.states[t].vector());
    const Eigen::VectorXd ut = u.at(t);
    advance(x.vector().data(), ut.data(), zero.data(), agents, cfg.dt_s);
  }
  return roll_out(nominal.states.front(), u, cost, ctx0, cfg);
}

}  // namespace detail

/// Runs iLQG from x0, starting from `initial` controls (zeros when omitted).
/**
 * Stops after max_iters accepted or rejected iterations, when the expected or realised relative
 * improvement drops below convergence_tol, or when damping exceeds damping_max (diverged; the best
 * trajectory found so far is returned). Throws IlqgError if the initial nominal has non-finite cost.
 */
template <CostModel Cost>
IlqgSolution ilqg_solve(const JointState& x0, const Cost& cost, const IlqgConfig& cfg,
                        const typename Cost::Context& context = {},
                        std::optional<ControlSequence> initial = std::nullopt) {
  cfg.validate();
  const std::size_t steps = cfg.steps();
  const std::size_t agents = x0.num_agents();
  ControlSequence u0 = initial ? *initial : ControlSequence(steps, agents);
  if (u0.steps() != steps || u0.num_agents() != agents) {
    throw ContractViolation("ilqg_solve: initial controls do not match horizon and agent count");
  }
  Eigen::MatrixXd a;
  Eigen::MatrixXd b;
  detail::double_integrator_jacobians(agents, cfg.dt_s, a, b);

  detail::Rollout nominal = detail::roll_out(x0, u0, cost, context, cfg);
  if (!std::isfinite(nominal.cost)) {
    throw IlqgError("ilqg_solve: non-finite cost along the initial nominal", nominal.bad_step);
  }

  IlqgSolution sol;
  sol.cost_trace.push_back(nominal.cost);
  double damping = cfg.damping_init;

  std::vector<double> alphas;
  if (cfg.mode == IlqgStepMode::kConstant) {
    alphas.push_back(cfg.step_size);
  } else {
    for (double alpha = 1.0; alpha >= cfg.step_size * (1.0 - 1e-12); alpha *= 0.5) {
      alphas.push_back(alpha);
    }
  }

  std::optional<detail::BackwardPass> pass;
  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    const auto quad = quadratize(cost, std::span<const JointState>(nominal.states), cfg.dt_s, context,
                                 cfg.hessian_floor);
    pass = detail::backward(quad, nominal.controls, a, b, cfg, damping);
    if (!pass) {
      damping = std::max(damping * cfg.damping_factor, cfg.damping_min);
      if (damping > cfg.damping_max) {
        sol.diverged = true;
        break;
      }
      continue;
    }
    const double scale = std::max(std::abs(nominal.cost), 1e-12);
    const double expected = -(pass->expected_linear + pass->expected_quadratic);
    if (expected < cfg.convergence_tol * scale) {
      sol.converged = true;
      break;
    }
    bool accepted = false;
    for (const double alpha : alphas) {
      auto candidate = detail::forward(nominal, *pass, alpha, cost, context, cfg);
      if (std::isfinite(candidate.cost) && candidate.cost < nominal.cost) {
        const double improvement = (nominal.cost - candidate.cost) / scale;
        nominal = std::move(candidate);
        sol.cost_trace.push_back(nominal.cost);
        ++sol.iterations;
        accepted = true;
        damping = damping / cfg.damping_factor < cfg.damping_min ? 0.0 : damping / cfg.damping_factor;
        if (improvement < cfg.convergence_tol && cfg.mode == IlqgStepMode::kBacktracking) {
          sol.converged = true;
        }
        break;
      }
    }
    if (sol.converged) {
      break;
    }
    if (!accepted) {
      damping = std::max(damping * cfg.damping_factor, cfg.damping_min);
      if (damping > cfg.damping_max) {
        sol.diverged = true;
        break;
      }
    }
  }

  // Gains consistent with the returned nominal.
  const auto quad =
      quadratize(cost, std::span<const JointState>(nominal.states), cfg.dt_s, context, cfg.hessian_floor);
  double final_damping = damping;
  pass = detail::backward(quad, nominal.controls, a, b, cfg, final_damping);
  while (!pass && final_damping <= cfg.damping_max) {
    final_damping = std::max(final_damping * cfg.damping_factor, cfg.damping_min);
    pass = detail::backward(quad, nominal.controls, a, b, cfg, final_damping);
  }
  sol.nominal_states = std::move(nominal.states);
  sol.nominal_controls = std::move(nominal.controls);
  if (pass) {
    sol.feedback_gains = std::move(pass->gains);
  } else {
    sol.feedback_gains.assign(steps, Eigen::MatrixXd::Zero(2 * static_cast<Eigen::Index>(agents),
                                                            4 * static_cast<Eigen::Index>(agents)));
  }
  return sol;
}

}  // namespace pisoc

#endif
